import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import blob_texture

from scalematch.errors import BBoxOutOfBounds, ImageTooSmall
from scalematch.geometry import BBox
from scalematch.proposals import (
    ObjectProposal,
    extract_crop,
    filter_proposals,
    selective_search,
)
from scalematch.segmentation import SegmentationParams, graph_segment


# ---------------------------------------------------------------------------
# graph_segment


def test_uniform_image_single_region():
    img = np.full((40, 40, 3), 0.5)
    labels = graph_segment(img)
    assert labels.max() == 0
    assert labels.min() == 0


def test_two_halves_two_regions():
    img = np.zeros((40, 40, 3))
    img[:, :20, 0] = 1.0  # pure red left
    img[:, 20:, 2] = 1.0  # pure blue right
    labels = graph_segment(img, SegmentationParams(k=300, smoothing_sigma=0.8, min_region=50))
    assert labels.max() == 1
    assert set(np.unique(labels[:, :20])) == {0}
    assert set(np.unique(labels[:, 20:])) == {1}


def test_huge_k_merges_noise_to_one_region():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, size=(30, 30, 3))
    labels = graph_segment(img, SegmentationParams(k=1e9, smoothing_sigma=0.8, min_region=1))
    assert labels.max() == 0


def test_labels_contiguous_from_zero():
    rng = np.random.default_rng(1)
    img = blob_texture(rng, 48, 48, n_blobs=12)
    labels = graph_segment(img)
    uniq = np.unique(labels)
    assert uniq[0] == 0
    assert np.array_equal(uniq, np.arange(len(uniq)))


def test_min_region_enforced():
    rng = np.random.default_rng(2)
    img = blob_texture(rng, 48, 48, n_blobs=12)
    labels = graph_segment(img, SegmentationParams(min_region=50))
    counts = np.bincount(labels.ravel())
    assert counts.min() >= 50 or labels.max() == 0


# ---------------------------------------------------------------------------
# selective_search


def test_uniform_image_single_proposal():
    img = np.full((40, 40, 3), 0.3)
    props = selective_search(img)
    assert len(props) == 1
    assert props[0].bbox == BBox(0, 0, 40, 40)


def test_two_region_image_three_proposals():
    img = np.zeros((40, 40, 3))
    img[:, :20, 0] = 1.0
    img[:, 20:, 2] = 1.0
    props = selective_search(img)
    boxes = [p.bbox for p in props]
    assert len(boxes) == 3
    assert BBox(0, 0, 20, 40) in boxes
    assert BBox(20, 0, 40, 40) in boxes
    assert boxes[-1] == BBox(0, 0, 40, 40)


def test_last_proposal_is_full_image():
    rng = np.random.default_rng(3)
    img = blob_texture(rng, 64, 64, n_blobs=20)
    props = selective_search(img)
    h, w = img.shape[:2]
    assert props[-1].bbox == BBox(0, 0, w, h)


def test_proposals_within_bounds_and_count_bound():
    rng = np.random.default_rng(4)
    img = blob_texture(rng, 64, 64, n_blobs=20)
    labels = graph_segment(img)
    n_initial = labels.max() + 1
    props = selective_search(img)
    assert len(props) <= 2 * n_initial - 1
    for p in props:
        b = p.bbox
        assert 0 <= b.x_min < b.x_max <= 64
        assert 0 <= b.y_min < b.y_max <= 64


def test_selective_search_too_small():
    with pytest.raises(ImageTooSmall):
        selective_search(np.zeros((16, 64, 3)))


def test_selective_search_deterministic():
    rng = np.random.default_rng(5)
    img = blob_texture(rng, 48, 48, n_blobs=15)
    a = [p.bbox for p in selective_search(img)]
    b = [p.bbox for p in selective_search(img)]
    assert a == b


# ---------------------------------------------------------------------------
# filter_proposals


def _box_proposal(w, h):
    return ObjectProposal(BBox(0, 0, w, h))


def test_filter_small_area_removed():
    assert filter_proposals([_box_proposal(10, 10)]) == []


def test_filter_wide_aspect_removed():
    assert filter_proposals([_box_proposal(100, 20)]) == []


def test_filter_square_retained():
    props = [_box_proposal(20, 20)]
    assert filter_proposals(props) == props


def test_filter_boundary_cases():
    kept = filter_proposals(
        [_box_proposal(20, 10), _box_proposal(30, 10), _box_proposal(10, 30), _box_proposal(31, 10)]
    )
    # 200 px^2 exactly and aspect 3 / (1/3) exactly are retained
    assert [(p.bbox.width, p.bbox.height) for p in kept] == [(20, 10), (30, 10), (10, 30)]


@given(st.lists(st.tuples(st.floats(1, 300), st.floats(1, 300)), max_size=30))
@settings(max_examples=50)
def test_filter_subset_order_preserving(sizes):
    props = [_box_proposal(w, h) for w, h in sizes]
    kept = filter_proposals(props)
    it = iter(props)
    assert all(any(k is p for p in it) for k in kept)  # order-preserving subset
    for p in kept:
        assert p.bbox.area >= 200
        assert 1 / 3 <= p.bbox.width / p.bbox.height <= 3


# ---------------------------------------------------------------------------
# extract_crop


def test_extract_crop_identity():
    rng = np.random.default_rng(6)
    img = rng.uniform(0, 1, size=(100, 100, 3))
    crop = extract_crop(img, BBox(10, 20, 74, 84), 64)
    assert np.array_equal(crop, img[20:84, 10:74])


def test_extract_crop_constant():
    img = np.full((50, 50, 3), 0.7)
    crop = extract_crop(img, BBox(5, 5, 30, 45), 16)
    assert np.allclose(crop, 0.7)


def test_extract_crop_checkerboard_average():
    img = np.zeros((2, 2, 3))
    img[0, 1] = img[1, 0] = 100.0
    crop = extract_crop(img, BBox(0, 0, 2, 2), 1)
    assert np.allclose(crop, 50.0)


def test_extract_crop_out_of_bounds():
    img = np.zeros((20, 20, 3))
    with pytest.raises(BBoxOutOfBounds):
        extract_crop(img, BBox(10, 10, 25, 15), 8)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_mutual

from scalematch.descriptors import ObjectDescriptor, describe_fallback
from scalematch.errors import LengthMismatch
from scalematch.geometry import BBox, Point2
from scalematch.matching import (
    global_sift_matches,
    match_objects,
    mutual_nearest_match,
    object_center_matches,
    region_guided_sift_matches,
)
from scalematch.proposals import ObjectProposal
from scalematch.sift import SiftFeature


def _feature(x, y, desc):
    return SiftFeature(Point2(x, y), 1.6, 0.0, np.asarray(desc, dtype=np.float64))


def _proposal(box, desc=None):
    p = ObjectProposal(BBox(*box))
    if desc is not None:
        p.descriptor = ObjectDescriptor(np.asarray(desc, dtype=np.float64))
    return p


# ---------------------------------------------------------------------------
# mutual_nearest_match


def test_singleton_match():
    v = np.array([[1.0, 2.0, 3.0]])
    assert mutual_nearest_match(v, v) == [(0, 0, 0.0)]


def test_cross_check_rejects_one_sided():
    # a0 is nearest to b0, but b0 prefers a1
    set_a = np.array([[0.0], [1.0]])
    set_b = np.array([[0.9]])
    got = mutual_nearest_match(set_a, set_b)
    assert got == [(1, 0, pytest.approx(0.1))]


def test_empty_inputs():
    assert mutual_nearest_match(np.empty((0, 4)), np.ones((3, 4))) == []
    assert mutual_nearest_match(np.ones((3, 4)), np.empty((0, 4))) == []


def test_dimension_mismatch():
    with pytest.raises(LengthMismatch):
        mutual_nearest_match(np.ones((2, 3)), np.ones((2, 4)))


def test_matches_oracle_euclidean_and_cosine():
    rng = np.random.default_rng(0)
    a = rng.uniform(0.1, 1.0, size=(50, 16))
    b = rng.uniform(0.1, 1.0, size=(50, 16))
    for metric in ("euclidean", "cosine"):
        assert mutual_nearest_match(a, b, metric) == brute_force_mutual(a, b, metric)


@given(st.integers(0, 2000), st.integers(1, 30), st.integers(1, 30), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_oracle_property(seed, na, nb, dim):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(na, dim))
    b = rng.normal(size=(nb, dim))
    got = mutual_nearest_match(a, b, "euclidean")
    assert got == brute_force_mutual(a, b, "euclidean")
    # injectivity per side
    assert len({i for i, _, _ in got}) == len(got)
    assert len({j for _, j, _ in got}) == len(got)


@given(st.integers(0, 2000), st.integers(1, 20), st.integers(1, 20))
@settings(max_examples=40, deadline=None)
def test_cross_check_symmetry(seed, na, nb):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(na, 4))
    b = rng.normal(size=(nb, 4))
    fwd = mutual_nearest_match(a, b, "euclidean")
    bwd = mutual_nearest_match(b, a, "euclidean")
    assert sorted((i, j) for i, j, _ in fwd) == sorted((j, i) for i, j, _ in bwd)


def test_tie_breaks_to_lowest_index():
    a = np.array([[0.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 0.0]])
    assert mutual_nearest_match(a, b) == [(0, 0, 0.0)]


# ---------------------------------------------------------------------------
# match_objects


def test_match_objects_self():
    rng = np.random.default_rng(1)
    descs = rng.uniform(0.1, 1.0, size=(5, 8))
    objs = [_proposal((0, 0, 10 + i, 10 + i), d) for i, d in enumerate(descs)]
    got = match_objects(objs, objs)
    assert [(m.index_a, m.index_b) for m in got] == [(i, i) for i in range(5)]
    assert all(m.distance < 1e-12 for m in got)


def test_match_objects_empty_side():
    objs = [_proposal((0, 0, 5, 5), [1.0, 2.0])]
    assert match_objects(objs, []) == []


def test_match_objects_oracle():
    rng = np.random.default_rng(2)
    da = rng.uniform(0.1, 1.0, size=(12, 6))
    db = rng.uniform(0.1, 1.0, size=(9, 6))
    objs_a = [_proposal((0, 0, 5, 5), d) for d in da]
    objs_b = [_proposal((0, 0, 5, 5), d) for d in db]
    got = [(m.index_a, m.index_b) for m in match_objects(objs_a, objs_b)]
    assert got == [(i, j) for i, j, _ in brute_force_mutual(da, db, "cosine")]


def test_match_objects_dim_mismatch():
    a = [_proposal((0, 0, 5, 5), [1.0, 2.0])]
    b = [_proposal((0, 0, 5, 5), [1.0, 2.0, 3.0])]
    with pytest.raises(LengthMismatch):
        match_objects(a, b)


def test_match_objects_mixed_families_rejected():
    a = [_proposal((0, 0, 5, 5))]
    a[0].descriptor = describe_fallback(np.full((8, 8, 3), 0.3) + np.random.default_rng(3).uniform(0, 0.1, (8, 8, 3)))
    b = [_proposal((0, 0, 5, 5))]
    b[0].descriptor = ObjectDescriptor(np.ones(3072), layer="res5c", resolution=224)
    with pytest.raises(LengthMismatch):
        match_objects(a, b)


# ---------------------------------------------------------------------------
# region-guided and baselines


def _toy_scene():
    """Two disjoint regions with planted corresponding features."""
    rng = np.random.default_rng(4)
    d = rng.normal(size=(6, 8))
    feats_a = [
        _feature(5, 5, d[0]),
        _feature(8, 6, d[1]),
        _feature(55, 50, d[2]),
        _feature(60, 58, d[3]),
    ]
    feats_b = [
        _feature(15, 15, d[0]),
        _feature(18, 16, d[1]),
        _feature(75, 70, d[2]),
        _feature(80, 78, d[3]),
    ]
    props_a = [_proposal((0, 0, 20, 20)), _proposal((40, 40, 70, 70))]
    props_b = [_proposal((10, 10, 30, 30)), _proposal((60, 60, 90, 90))]
    from scalematch.matching import ObjectMatch

    object_matches = [ObjectMatch(0, 0, 0.1), ObjectMatch(1, 1, 0.2)]
    return object_matches, props_a, props_b, feats_a, feats_b


def test_region_guided_empty_object_matches():
    _, props_a, props_b, feats_a, feats_b = _toy_scene()
    assert region_guided_sift_matches([], props_a, props_b, feats_a, feats_b) == []


def test_region_guided_full_image_equals_global():
    rng = np.random.default_rng(5)
    descs_a = rng.normal(size=(15, 8))
    descs_b = rng.normal(size=(12, 8))
    feats_a = [_feature(rng.uniform(0, 100), rng.uniform(0, 100), d) for d in descs_a]
    feats_b = [_feature(rng.uniform(0, 100), rng.uniform(0, 100), d) for d in descs_b]
    props_a = [_proposal((0, 0, 100, 100))]
    props_b = [_proposal((0, 0, 100, 100))]
    from scalematch.matching import ObjectMatch

    guided = region_guided_sift_matches(
        [ObjectMatch(0, 0, 0.0)], props_a, props_b, feats_a, feats_b
    )
    assert guided == global_sift_matches(feats_a, feats_b)


def test_region_guided_planted_pairs():
    object_matches, props_a, props_b, feats_a, feats_b = _toy_scene()
    got = region_guided_sift_matches(object_matches, props_a, props_b, feats_a, feats_b)
    assert [(m.a.x, m.a.y, m.b.x, m.b.y) for m in got] == [
        (5, 5, 15, 15),
        (8, 6, 18, 16),
        (55, 50, 75, 70),
        (60, 58, 80, 78),
    ]


def test_region_guided_containment():
    object_matches, props_a, props_b, feats_a, feats_b = _toy_scene()
    got = region_guided_sift_matches(object_matches, props_a, props_b, feats_a, feats_b)
    for m in got:
        assert any(
            props_a[om.index_a].bbox.contains(m.a) and props_b[om.index_b].bbox.contains(m.b)
            for om in object_matches
        )


def test_global_matches_identical_sets():
    rng = np.random.default_rng(6)
    feats = [_feature(i, i, d) for i, d in enumerate(rng.normal(size=(7, 8)))]
    got = global_sift_matches(feats, feats)
    assert len(got) == 7
    assert all(m.a == m.b for m in got)


def test_global_matches_empty():
    rng = np.random.default_rng(7)
    feats = [_feature(0, 0, rng.normal(size=8))]
    assert global_sift_matches(feats, []) == []


def test_object_center_matches():
    from scalematch.matching import ObjectMatch

    props_a = [_proposal((0, 0, 10, 10))]
    props_b = [_proposal((20, 20, 40, 40))]
    got = object_center_matches([ObjectMatch(0, 0, 0.3)], props_a, props_b)
    assert got == [
        __import__("scalematch.geometry", fromlist=["PointMatch"]).PointMatch(
            Point2(5, 5), Point2(30, 30), 0.3
        )
    ]


def test_object_center_cardinality():
    from scalematch.matching import ObjectMatch

    props = [_proposal((i, i, i + 10, i + 10)) for i in range(6)]
    oms = [ObjectMatch(i, i, 0.0) for i in range(6)]
    assert len(object_center_matches(oms, props, props)) == 6
    assert object_center_matches([], props, props) == []

"""Class-agnostic object-region proposals by hierarchical region merging.

An initial over-segmentation is merged greedily: at each step the most
similar pair of adjacent regions (color + texture + size + fill, equally
weighted) becomes one region, and every region ever formed contributes its
bounding box as a proposal.  A single segmentation scale and HSV color
histograms are used, which keeps the procedure deterministic; ties in
similarity break toward the lowest region-id pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .descriptors import ObjectDescriptor
from .errors import BBoxOutOfBounds, ImageTooSmall
from .geometry import BBox
from .imageops import as_float_image, rgb_to_hsv, sample_bilinear
from .segmentation import SegmentationParams, graph_segment

_COLOR_BINS = 25
_TEXTURE_ORIENTATIONS = 8
_TEXTURE_BINS = 10
_TEXTURE_MAG_CAP = 0.25

MIN_PROPOSAL_AREA = 200.0
ASPECT_LIMIT = 3.0


@dataclass
class ObjectProposal:
    """A rectangular region hypothesized to be an object.

    ``descriptor`` starts empty and is filled by a descriptor backend.
    """

    bbox: BBox
    descriptor: ObjectDescriptor | None = None


def _color_histograms(hsv: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    bins = np.clip((hsv * _COLOR_BINS).astype(np.int64), 0, _COLOR_BINS - 1)
    flat_labels = labels.ravel()
    hists = np.empty((n, 3 * _COLOR_BINS))
    for c in range(3):
        combined = flat_labels * _COLOR_BINS + bins[..., c].ravel()
        counts = np.bincount(combined, minlength=n * _COLOR_BINS)
        hists[:, c * _COLOR_BINS : (c + 1) * _COLOR_BINS] = counts.reshape(n, _COLOR_BINS)
    sums = hists.sum(axis=1, keepdims=True)
    return hists / np.where(sums > 0, sums, 1.0)


def _texture_histograms(image: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    flat_labels = labels.ravel()
    per = _TEXTURE_ORIENTATIONS * _TEXTURE_BINS
    hists = np.empty((n, 3 * per))
    for c in range(3):
        gy = ndimage.gaussian_filter(image[..., c], 1.0, order=(1, 0), mode="mirror")
        gx = ndimage.gaussian_filter(image[..., c], 1.0, order=(0, 1), mode="mirror")
        ang = np.arctan2(gy, gx)  # [-pi, pi]
        obin = np.clip(
            ((ang + np.pi) / (2 * np.pi) * _TEXTURE_ORIENTATIONS).astype(np.int64),
            0,
            _TEXTURE_ORIENTATIONS - 1,
        )
        mag = np.hypot(gx, gy)
        mbin = np.clip(
            (mag / _TEXTURE_MAG_CAP * _TEXTURE_BINS).astype(np.int64), 0, _TEXTURE_BINS - 1
        )
        combined = (flat_labels * _TEXTURE_ORIENTATIONS + obin.ravel()) * _TEXTURE_BINS + mbin.ravel()
        counts = np.bincount(combined, minlength=n * per)
        hists[:, c * per : (c + 1) * per] = counts.reshape(n, per)
    sums = hists.sum(axis=1, keepdims=True)
    return hists / np.where(sums > 0, sums, 1.0)


def _adjacency(labels: np.ndarray) -> set[tuple[int, int]]:
    pairs = set()
    horiz = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    vert = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    for a, b in np.concatenate([horiz, vert]):
        if a != b:
            pairs.add((min(int(a), int(b)), max(int(a), int(b))))
    return pairs


class _Region:
    __slots__ = ("size", "bbox", "color", "texture")

    def __init__(self, size, bbox, color, texture):
        self.size = size
        self.bbox = bbox
        self.color = color
        self.texture = texture


def _similarity(a: _Region, b: _Region, image_size: float) -> float:
    s_color = np.minimum(a.color, b.color).sum()
    s_texture = np.minimum(a.texture, b.texture).sum()
    s_size = 1.0 - (a.size + b.size) / image_size
    union = a.bbox.union(b.bbox)
    s_fill = 1.0 - (union.area - a.size - b.size) / image_size
    return float(s_color + s_texture + s_size + s_fill)


def selective_search(
    image: np.ndarray, params: SegmentationParams = SegmentationParams()
) -> list[ObjectProposal]:
    """Generate object proposals for an RGB image (at least 32x32).

    Returns the bounding boxes of all initial regions plus every merged
    region, in formation order, with identical boxes deduplicated.  The
    last unique box is always the full-image box.
    """
    arr = as_float_image(image)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    h, w = arr.shape[:2]
    if min(h, w) < 32:
        raise ImageTooSmall(f"selective search needs >= 32x32 pixels, got {w}x{h}")

    labels = graph_segment(arr, params)
    n = int(labels.max()) + 1
    image_size = float(h * w)

    color = _color_histograms(rgb_to_hsv(arr), labels, n)
    texture = _texture_histograms(arr, labels, n)
    sizes = np.bincount(labels.ravel(), minlength=n)
    slices = ndimage.find_objects(labels + 1)  # find_objects skips label 0

    regions: dict[int, _Region] = {}
    boxes: list[BBox] = []
    for i in range(n):
        sl = slices[i]
        bbox = BBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        regions[i] = _Region(float(sizes[i]), bbox, color[i], texture[i])
        boxes.append(bbox)

    neighbors = _adjacency(labels)
    sims = {
        pair: _similarity(regions[pair[0]], regions[pair[1]], image_size)
        for pair in neighbors
    }

    next_id = n
    while len(regions) > 1:
        # highest similarity wins; equal similarity -> lowest id pair
        (ia, ib), _ = max(sims.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
        ra, rb = regions.pop(ia), regions.pop(ib)
        merged = _Region(
            ra.size + rb.size,
            ra.bbox.union(rb.bbox),
            (ra.color * ra.size + rb.color * rb.size) / (ra.size + rb.size),
            (ra.texture * ra.size + rb.texture * rb.size) / (ra.size + rb.size),
        )
        new_id = next_id
        next_id += 1

        touched = set()
        for pair in list(sims):
            if ia in pair or ib in pair:
                del sims[pair]
                other = pair[0] if pair[1] in (ia, ib) else pair[1]
                if other not in (ia, ib):
                    touched.add(other)
        regions[new_id] = merged
        boxes.append(merged.bbox)
        for other in touched:
            sims[(other, new_id)] = _similarity(regions[other], merged, image_size)

    # dedup identical boxes, keeping the last emission of each so the final
    # (full-image) merge always closes the list
    last_index: dict[tuple, int] = {}
    for idx, box in enumerate(boxes):
        last_index[(box.x_min, box.y_min, box.x_max, box.y_max)] = idx
    return [ObjectProposal(boxes[i]) for i in sorted(last_index.values())]


def filter_proposals(proposals: list[ObjectProposal]) -> list[ObjectProposal]:
    """Drop boxes under 200 px^2 or with aspect ratio outside [1/3, 3]."""
    kept = []
    for p in proposals:
        aspect = p.bbox.width / p.bbox.height
        if p.bbox.area >= MIN_PROPOSAL_AREA and 1.0 / ASPECT_LIMIT <= aspect <= ASPECT_LIMIT:
            kept.append(p)
    return kept


def extract_crop(image: np.ndarray, bbox: BBox, resolution: int) -> np.ndarray:
    """Resample the bbox region to ``resolution x resolution`` bilinearly.

    Sampling is center-aligned within the box and clamped to it, so a box
    whose size equals ``resolution`` is copied exactly.
    """
    arr = as_float_image(image)
    h, w = arr.shape[:2]
    if bbox.x_min < 0 or bbox.y_min < 0 or bbox.x_max > w or bbox.y_max > h:
        raise BBoxOutOfBounds(f"bbox {bbox} exceeds {w}x{h} image")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    xs = bbox.x_min + (np.arange(resolution) + 0.5) * (bbox.width / resolution) - 0.5
    ys = bbox.y_min + (np.arange(resolution) + 0.5) * (bbox.height / resolution) - 0.5
    xs = np.clip(xs, bbox.x_min, bbox.x_max - 1.0)
    ys = np.clip(ys, bbox.y_min, bbox.y_max - 1.0)
    gx, gy = np.meshgrid(xs, ys)
    return sample_bilinear(arr, gx, gy)

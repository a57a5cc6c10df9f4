"""Matching strategies: mutual nearest neighbors with cross-checking,
object matching, region-guided point matching, and the two baselines.

Brute force is deliberate: it is both the method of record and the
correctness oracle, so no approximate index is used.  All functions are
pure and return deterministically ordered results.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, ZeroVector
from .geometry import PointMatch
from .proposals import ObjectProposal
from .sift import SiftFeature


class MatchMethod(str, enum.Enum):
    sift_only = "sift_only"
    objects_only = "objects_only"
    combined = "combined"


@dataclass(frozen=True)
class ObjectMatch:
    """A cross-checked pairing of proposal indices with its cosine distance."""

    index_a: int
    index_b: int
    distance: float

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("match distance must be non-negative")


def _distance_row(metric: str, a_row: np.ndarray, b: np.ndarray, b_norms) -> np.ndarray:
    if metric == "euclidean":
        diff = a_row - b
        return np.sqrt((diff * diff).sum(axis=1))
    # cosine
    na = np.linalg.norm(a_row)
    if na == 0.0:
        raise ZeroVector("cosine matching is undefined for zero vectors")
    return 1.0 - (b @ a_row) / (b_norms * na)


def mutual_nearest_match(set_a, set_b, metric: str = "euclidean") -> list[tuple[int, int, float]]:
    """Cross-checked nearest-neighbor matches between two descriptor sets.

    A pair ``(i, j)`` is kept only when ``j`` is the nearest neighbor of
    ``a_i`` in ``set_b`` and ``i`` is the nearest neighbor of ``b_j`` in
    ``set_a``.  Ties break toward the lowest index; output is sorted by
    ``i``.  Empty inputs yield an empty list.
    """
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return []
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if a.shape[1] != b.shape[1]:
        raise LengthMismatch(f"descriptor lengths differ: {a.shape[1]} vs {b.shape[1]}")

    b_norms = None
    if metric == "cosine":
        b_norms = np.linalg.norm(b, axis=1)
        if np.any(b_norms == 0.0):
            raise ZeroVector("cosine matching is undefined for zero vectors")

    nearest_in_b = np.empty(len(a), dtype=np.intp)
    best_for_b = np.full(len(b), np.inf)
    nearest_in_a = np.zeros(len(b), dtype=np.intp)
    for i in range(len(a)):
        d = _distance_row(metric, a[i], b, b_norms)
        nearest_in_b[i] = int(np.argmin(d))
        better = d < best_for_b
        best_for_b[better] = d[better]
        nearest_in_a[better] = i

    matches = []
    for i in range(len(a)):
        j = int(nearest_in_b[i])
        if nearest_in_a[j] != i:
            continue
        # recompute the reported distance as a plain per-pair reduction so it
        # is reproducible by a scalar double loop
        if metric == "euclidean":
            dist = float(np.sqrt(((a[i] - b[j]) ** 2).sum()))
        else:
            dist = 1.0 - float(np.dot(a[i], b[j])) / (
                float(np.linalg.norm(a[i])) * float(np.linalg.norm(b[j]))
            )
        matches.append((i, j, dist))
    return matches


def match_objects(objs_a: list[ObjectProposal], objs_b: list[ObjectProposal]) -> list[ObjectMatch]:
    """Brute-force cosine matching of proposal descriptors, cross-checked."""
    if not objs_a or not objs_b:
        return []
    tags = {(p.descriptor.layer, p.descriptor.resolution) for p in objs_a + objs_b if p.descriptor}
    if any(p.descriptor is None for p in objs_a + objs_b):
        raise ValueError("all proposals must carry descriptors")
    if len(tags) > 1:
        raise LengthMismatch(f"mixed descriptor families: {sorted(map(str, tags))}")
    da = np.stack([p.descriptor.values for p in objs_a]).astype(np.float64)
    db = np.stack([p.descriptor.values for p in objs_b]).astype(np.float64)
    if da.shape[1] != db.shape[1]:
        raise LengthMismatch(f"descriptor lengths differ: {da.shape[1]} vs {db.shape[1]}")
    # zero-norm descriptors (e.g. constant crops) carry no information and
    # have no cosine distance; they simply cannot match
    keep_a = np.flatnonzero(np.linalg.norm(da, axis=1) > 0)
    keep_b = np.flatnonzero(np.linalg.norm(db, axis=1) > 0)
    if len(keep_a) == 0 or len(keep_b) == 0:
        return []
    return [
        ObjectMatch(int(keep_a[i]), int(keep_b[j]), max(d, 0.0))
        for i, j, d in mutual_nearest_match(da[keep_a], db[keep_b], "cosine")
    ]


def _features_inside(features: list[SiftFeature], bbox) -> np.ndarray:
    return np.array(
        [i for i, f in enumerate(features) if bbox.contains(f.location)], dtype=np.intp
    )


def region_guided_sift_matches(
    object_matches: list[ObjectMatch],
    proposals_a: list[ObjectProposal],
    proposals_b: list[ObjectProposal],
    sift_a: list[SiftFeature],
    sift_b: list[SiftFeature],
) -> list[PointMatch]:
    """Match point features only inside corresponding object regions.

    For every matched object pair, features within the two boxes are
    mutual-nearest matched; candidates from all pairs are merged with the
    smallest-distance assignment winning when a feature appears in several
    overlapping regions.  Result is sorted by (index_a, index_b).
    """
    if not object_matches or not sift_a or not sift_b:
        return []
    desc_a = np.stack([f.descriptor for f in sift_a]).astype(np.float64)
    desc_b = np.stack([f.descriptor for f in sift_b]).astype(np.float64)

    candidates: list[tuple[float, int, int]] = []
    for om in object_matches:
        ia = _features_inside(sift_a, proposals_a[om.index_a].bbox)
        ib = _features_inside(sift_b, proposals_b[om.index_b].bbox)
        if len(ia) == 0 or len(ib) == 0:
            continue
        for li, lj, dist in mutual_nearest_match(desc_a[ia], desc_b[ib], "euclidean"):
            candidates.append((dist, int(ia[li]), int(ib[lj])))

    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    kept: list[tuple[int, int, float]] = []
    for dist, gi, gj in candidates:
        if gi in used_a or gj in used_b:
            continue
        used_a.add(gi)
        used_b.add(gj)
        kept.append((gi, gj, dist))

    kept.sort(key=lambda c: (c[0], c[1]))
    return [
        PointMatch(sift_a[gi].location, sift_b[gj].location, dist) for gi, gj, dist in kept
    ]


def global_sift_matches(sift_a: list[SiftFeature], sift_b: list[SiftFeature]) -> list[PointMatch]:
    """Baseline: mutual-nearest matching over all features of both images."""
    if not sift_a or not sift_b:
        return []
    desc_a = np.stack([f.descriptor for f in sift_a]).astype(np.float64)
    desc_b = np.stack([f.descriptor for f in sift_b]).astype(np.float64)
    return [
        PointMatch(sift_a[i].location, sift_b[j].location, dist)
        for i, j, dist in mutual_nearest_match(desc_a, desc_b, "euclidean")
    ]


def object_center_matches(
    object_matches: list[ObjectMatch],
    proposals_a: list[ObjectProposal],
    proposals_b: list[ObjectProposal],
) -> list[PointMatch]:
    """Baseline: one point match per object match, at bounding-box centers."""
    return [
        PointMatch(
            proposals_a[om.index_a].bbox.center,
            proposals_b[om.index_b].bbox.center,
            om.distance,
        )
        for om in object_matches
    ]

"""Planar and epipolar geometry: domain types and robust model estimation.

Conventions
-----------
* Image points are continuous pixel coordinates (x along columns, y along
  rows).
* A homography maps homogeneous columns ``[x, y, 1]^T`` of the first image
  onto the second.
* A relative pose ``(R, t)`` places the second camera of a pair in the first
  camera's frame: ``X_first = R @ X_second + t``, so ``t`` points from the
  first camera to the second.  Essential matrices satisfy
  ``b^T E a = 0`` for normalized points ``a`` (first image) and ``b``
  (second image).

All estimators are pure functions; RANSAC draws randomness from a generator
seeded per call, so identical inputs and seed give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheiralityAmbiguity,
    DegenerateConfiguration,
    InsufficientMatches,
    NoConsensus,
    PointAtInfinity,
    SingularHomography,
)

_W_EPS = 1e-12


@dataclass(frozen=True)
class Point2:
    """A 2-D point in continuous pixel coordinates."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box; ``x_max``/``y_max`` are exclusive pixel bounds."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("bbox must have positive width and height")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point2:
        return Point2((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, p: Point2) -> bool:
        """Closed-interval containment: boundary points count as inside."""
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )


@dataclass(frozen=True)
class PointMatch:
    """A pair of points asserted to correspond, with its match distance."""

    a: Point2
    b: Point2
    score: float = 0.0

    def __post_init__(self):
        if self.score < 0:
            raise ValueError("match score must be non-negative")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def normalize(self, pts: np.ndarray) -> np.ndarray:
        """Pixel coordinates -> normalized camera coordinates, (N, 2)."""
        pts = np.asarray(pts, dtype=np.float64)
        out = np.empty_like(pts)
        out[:, 0] = (pts[:, 0] - self.cx) / self.fx
        out[:, 1] = (pts[:, 1] - self.cy) / self.fy
        return out


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 6.0
    max_iterations: int = 2000
    confidence: float = 0.999
    rng_seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise ValueError("inlier threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, stored Frobenius-normalized.

    The constructor rescales so ``||h||_F = 1`` and flips sign so
    ``h[2, 2] >= 0``, which makes equality checks meaningful, and rejects
    matrices that are singular after normalization.
    """

    h: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.h, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("homography must be a finite 3x3 matrix")
        norm = np.linalg.norm(m)
        if norm == 0:
            raise SingularHomography("zero homography")
        m = m / norm
        if m[2, 2] < 0:
            m = -m
        if abs(np.linalg.det(m)) <= 1e-12:
            raise SingularHomography("homography is singular after normalization")
        m.flags.writeable = False
        object.__setattr__(self, "h", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


@dataclass(frozen=True)
class EssentialMatrix:
    """3x3 essential matrix, projected onto singular values ``(1, 1, 0)``.

    Construction enforces the rank-2, equal-singular-value structure rather
    than assuming it, and fixes the (otherwise arbitrary) overall sign so
    the entry of largest magnitude is positive.
    """

    e: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.e, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("essential matrix must be a finite 3x3 matrix")
        u, s, vt = np.linalg.svd(m)
        scale = (s[0] + s[1]) / 2.0
        if scale <= 1e-12:
            raise DegenerateConfiguration("essential matrix has rank < 2")
        m = u @ np.diag([1.0, 1.0, 0.0]) @ vt
        flat = m.ravel()
        lead = flat[np.argmax(np.abs(flat))]
        if lead < 0:
            m = -m
        m.flags.writeable = False
        object.__setattr__(self, "e", m)


@dataclass(frozen=True)
class UnitQuaternion:
    """Rotation as a unit quaternion ``(w, x, y, z)``."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("w", "x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        n = self.w**2 + self.x**2 + self.y**2 + self.z**2
        if abs(n - 1.0) > 1e-9:
            raise ValueError("quaternion is not unit length")

    @classmethod
    def normalized(cls, w: float, x: float, y: float, z: float) -> "UnitQuaternion":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0:
            raise ValueError("cannot normalize a zero quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_rotation(cls, r: np.ndarray) -> "UnitQuaternion":
        """Quaternion of a rotation matrix, canonical sign ``w >= 0``."""
        m = np.asarray(r, dtype=np.float64)
        t = np.trace(m)
        if t > 0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        if w < 0:
            w, x, y, z = -w, -x, -y, -z
        return cls.normalized(w, x, y, z)

    def to_rotation(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def dot(self, other: "UnitQuaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z


@dataclass(frozen=True)
class RelativePose:
    """Pose of the second camera in the first camera's frame.

    ``translation`` is unit length when recovered from an essential matrix
    and metric (meters) when it comes from ground truth.
    """

    rotation: UnitQuaternion
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)


# ---------------------------------------------------------------------------
# Homography operations


def transform_points(h_matrix: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a 3x3 projective matrix to an (N, 2) array of points."""
    pts = np.asarray(pts, dtype=np.float64)
    hom = np.column_stack([pts, np.ones(len(pts))])
    mapped = hom @ np.asarray(h_matrix, dtype=np.float64).T
    w = mapped[:, 2]
    if np.any(np.abs(w) < _W_EPS):
        raise PointAtInfinity("projective weight vanished")
    return mapped[:, :2] / w[:, None]


def apply_homography(h: Homography, p: Point2) -> Point2:
    """Project one point through a homography (with perspective division)."""
    v = h.h @ np.array([p.x, p.y, 1.0])
    if abs(v[2]) < _W_EPS:
        raise PointAtInfinity(f"point ({p.x}, {p.y}) maps to infinity")
    return Point2(v[0] / v[2], v[1] / v[2])


def _hartley_normalization(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Translate the centroid to the origin and scale mean radius to sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    normed = (pts - centroid) * s
    return normed, t


def _match_arrays(matches) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([[m.a.x, m.a.y] for m in matches], dtype=np.float64)
    dst = np.array([[m.b.x, m.b.y] for m in matches], dtype=np.float64)
    return src, dst


def _dlt_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    sn, ts = _hartley_normalization(src)
    dn, td = _hartley_normalization(dst)
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = v * x
    a[1::2, 7] = v * y
    a[1::2, 8] = v
    _, s, vt = np.linalg.svd(a)
    if s[7] <= max(1e-10 * s[0], 1e-14):
        raise DegenerateConfiguration("homography design matrix is rank-deficient")
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(td) @ hn @ ts


def dlt_homography(matches) -> Homography:
    """Least-squares homography from >= 4 correspondences (normalized DLT)."""
    matches = list(matches)
    if len(matches) < 4:
        raise InsufficientMatches(f"need at least 4 matches, got {len(matches)}")
    src, dst = _match_arrays(matches)
    return Homography(_dlt_matrix(src, dst))


def _has_collinear_triple(pts: np.ndarray) -> bool:
    spread = float(np.ptp(pts, axis=0).max())
    eps = max(1e-12, 1e-8 * spread * spread)
    n = len(pts)
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            for k in range(j + 1, n):
                d1 = pts[j] - pts[i]
                d2 = pts[k] - pts[i]
                if abs(d1[0] * d2[1] - d1[1] * d2[0]) <= eps:
                    return True
    return False


def _adaptive_iterations(inlier_ratio: float, sample_size: int, confidence: float) -> int:
    if inlier_ratio <= 0.0:
        return 1 << 30
    if inlier_ratio >= 1.0:
        return 0
    denom = math.log(1.0 - inlier_ratio**sample_size) if inlier_ratio**sample_size < 1.0 else -math.inf
    if denom == 0.0 or denom == -math.inf:
        return 0
    return int(math.ceil(math.log(1.0 - confidence) / denom))


def _symmetric_transfer_inliers(
    hm: np.ndarray, src: np.ndarray, dst: np.ndarray, threshold: float
) -> np.ndarray:
    """Inlier mask: forward and backward reprojection each within threshold."""
    try:
        inv = np.linalg.inv(hm)
    except np.linalg.LinAlgError:
        return np.zeros(len(src), dtype=bool)
    hom_s = np.column_stack([src, np.ones(len(src))])
    hom_d = np.column_stack([dst, np.ones(len(dst))])
    fwd = hom_s @ hm.T
    bwd = hom_d @ inv.T
    ok = (np.abs(fwd[:, 2]) >= _W_EPS) & (np.abs(bwd[:, 2]) >= _W_EPS)
    mask = np.zeros(len(src), dtype=bool)
    if not np.any(ok):
        return mask
    fe = np.full(len(src), np.inf)
    be = np.full(len(src), np.inf)
    fe[ok] = np.linalg.norm(fwd[ok, :2] / fwd[ok, 2:3] - dst[ok], axis=1)
    be[ok] = np.linalg.norm(bwd[ok, :2] / bwd[ok, 2:3] - src[ok], axis=1)
    mask = (fe <= threshold) & (be <= threshold)
    return mask


def estimate_homography_ransac(matches, cfg: RansacConfig) -> tuple[Homography, np.ndarray]:
    """RANSAC homography with symmetric-transfer inlier test and DLT refit.

    Returns the refit homography and the boolean inlier mask of the best
    consensus set.  Raises ``InsufficientMatches`` below the minimal sample
    and ``NoConsensus`` when the best model has fewer than 4 inliers.
    """
    matches = list(matches)
    n = len(matches)
    if n < 4:
        raise InsufficientMatches(f"homography needs >= 4 matches, got {n}")
    src, dst = _match_arrays(matches)
    rng = np.random.default_rng(cfg.rng_seed)

    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        s, d = src[idx], dst[idx]
        if _has_collinear_triple(s) or _has_collinear_triple(d):
            continue
        try:
            hm = _dlt_matrix(s, d)
        except DegenerateConfiguration:
            continue
        mask = _symmetric_transfer_inliers(hm, src, dst, cfg.inlier_threshold)
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            needed = _adaptive_iterations(count / n, 4, cfg.confidence)

    if best_count < 4:
        raise NoConsensus(f"best homography supported by {best_count} < 4 inliers")
    refit = Homography(_dlt_matrix(src[best_mask], dst[best_mask]))
    return refit, best_mask


# ---------------------------------------------------------------------------
# Essential-matrix operations


def _eight_point_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an, ta = _hartley_normalization(a)
    bn, tb = _hartley_normalization(b)
    design = np.column_stack(
        [
            bn[:, 0] * an[:, 0],
            bn[:, 0] * an[:, 1],
            bn[:, 0],
            bn[:, 1] * an[:, 0],
            bn[:, 1] * an[:, 1],
            bn[:, 1],
            an[:, 0],
            an[:, 1],
            np.ones(len(a)),
        ]
    )
    _, s, vt = np.linalg.svd(design)
    if s[7] <= max(1e-10 * s[0], 1e-14):
        raise DegenerateConfiguration("essential design matrix is rank-deficient")
    e = vt[-1].reshape(3, 3)
    return tb.T @ e @ ta


def eight_point_essential(matches) -> EssentialMatrix:
    """Essential matrix from >= 8 matches in normalized camera coordinates."""
    matches = list(matches)
    if len(matches) < 8:
        raise InsufficientMatches(f"need at least 8 matches, got {len(matches)}")
    a, b = _match_arrays(matches)
    return EssentialMatrix(_eight_point_matrix(a, b))


def _sampson_distance(e: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """First-order epipolar distance in normalized coordinates, (N,)."""
    ah = np.column_stack([a, np.ones(len(a))])
    bh = np.column_stack([b, np.ones(len(b))])
    ea = ah @ e.T  # rows: E @ a_i
    etb = bh @ e  # rows: E^T @ b_i
    num = np.abs(np.einsum("ij,ij->i", bh, ea))
    den = np.sqrt(ea[:, 0] ** 2 + ea[:, 1] ** 2 + etb[:, 0] ** 2 + etb[:, 1] ** 2)
    den = np.where(den < 1e-15, 1e-15, den)
    return num / den


def estimate_essential_ransac(
    matches, k: CameraIntrinsics, cfg: RansacConfig
) -> tuple[EssentialMatrix, np.ndarray]:
    """RANSAC essential matrix from pixel correspondences.

    Points are normalized by the intrinsics; the inlier test is the Sampson
    distance scaled back to pixels by the mean focal length and compared to
    ``cfg.inlier_threshold``.
    """
    matches = list(matches)
    n = len(matches)
    if n < 8:
        raise InsufficientMatches(f"essential matrix needs >= 8 matches, got {n}")
    a_pix, b_pix = _match_arrays(matches)
    a = k.normalize(a_pix)
    b = k.normalize(b_pix)
    focal = (k.fx + k.fy) / 2.0
    rng = np.random.default_rng(cfg.rng_seed)

    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        it += 1
        idx = rng.choice(n, size=8, replace=False)
        try:
            e = _eight_point_matrix(a[idx], b[idx])
        except DegenerateConfiguration:
            continue
        mask = _sampson_distance(e, a, b) * focal <= cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            needed = _adaptive_iterations(count / n, 8, cfg.confidence)

    if best_count < 8:
        raise NoConsensus(f"best essential matrix supported by {best_count} < 8 inliers")
    refit = EssentialMatrix(_eight_point_matrix(a[best_mask], b[best_mask]))
    return refit, best_mask


def _triangulate(p2: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear triangulation with P1 = [I|0].

    Returns (N, 3) points in camera-1 coordinates plus a validity mask
    (false where the point sits at infinity).
    """
    out = np.zeros((len(a), 3))
    valid = np.ones(len(a), dtype=bool)
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    for i in range(len(a)):
        m = np.stack(
            [
                a[i, 0] * p1[2] - p1[0],
                a[i, 1] * p1[2] - p1[1],
                b[i, 0] * p2[2] - p2[0],
                b[i, 1] * p2[2] - p2[1],
            ]
        )
        _, _, vt = np.linalg.svd(m)
        x = vt[-1]
        if abs(x[3]) < 1e-12:
            valid[i] = False
        else:
            out[i] = x[:3] / x[3]
    return out, valid


def recover_pose(e: EssentialMatrix, inliers, k: CameraIntrinsics) -> RelativePose:
    """Pose from an essential matrix by SVD decomposition and cheirality vote.

    Of the four ``(R, t)`` decompositions, returns the one that places a
    strict majority of triangulated inlier points in front of both cameras,
    converted to the pose of the second camera in the first camera's frame
    with unit translation; raises ``CheiralityAmbiguity`` if no candidate
    wins a strict majority.
    """
    inliers = list(inliers)
    if not inliers:
        raise ValueError("need at least one inlier to disambiguate the pose")
    a_pix, b_pix = _match_arrays(inliers)
    a = k.normalize(a_pix)
    b = k.normalize(b_pix)

    u, _, vt = np.linalg.svd(e.e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r1 = u @ w @ vt
    r2 = u @ w.T @ vt
    t = u[:, 2]

    best = None
    best_front = -1
    n = len(inliers)
    for r_cand, t_cand in ((r1, t), (r1, -t), (r2, t), (r2, -t)):
        p2 = np.hstack([r_cand, t_cand.reshape(3, 1)])
        pts, valid = _triangulate(p2, a, b)
        z1 = pts[:, 2]
        z2 = pts @ r_cand[2] + t_cand[2]
        front = int(np.sum(valid & (z1 > 0) & (z2 > 0)))
        if front > best_front:
            best_front = front
            best = (r_cand, t_cand)
    if best is None or best_front * 2 <= n:
        raise CheiralityAmbiguity(
            f"best decomposition has {max(best_front, 0)}/{n} points in front"
        )

    r_fw, t_fw = best  # X_second = r_fw @ X_first + t_fw
    r_rel = r_fw.T
    t_rel = -r_fw.T @ t_fw
    t_rel = t_rel / np.linalg.norm(t_rel)
    return RelativePose(UnitQuaternion.from_rotation(r_rel), t_rel)

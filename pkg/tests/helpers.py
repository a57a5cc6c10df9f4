"""Shared test helpers: independent oracles and synthetic-data generators.

Oracles here are deliberately written as naive double loops or closed-form
constructions so they stay independent of the library code they check.
"""

from __future__ import annotations

import math

import numpy as np

from scalematch.geometry import CameraIntrinsics, Point2, PointMatch


# ---------------------------------------------------------------------------
# Brute-force matching oracle


def brute_force_mutual(set_a, set_b, metric="euclidean"):
    """O(n^2) double-loop mutual-nearest-neighbor matcher."""
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return []
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)

    def dist(u, v):
        if metric == "euclidean":
            return math.sqrt(float(((u - v) ** 2).sum()))
        return 1.0 - float(np.dot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))

    d = [[dist(a[i], b[j]) for j in range(len(b))] for i in range(len(a))]
    matches = []
    for i in range(len(a)):
        best_j, best = 0, d[i][0]
        for j in range(1, len(b)):
            if d[i][j] < best:
                best_j, best = j, d[i][j]
        # cross check: is i the argmin of column best_j?
        back_i, back = 0, d[0][best_j]
        for i2 in range(1, len(a)):
            if d[i2][best_j] < back:
                back_i, back = i2, d[i2][best_j]
        if back_i == i:
            matches.append((i, best_j, best))
    return matches


# ---------------------------------------------------------------------------
# Homography generators and oracles


def random_homography(rng) -> np.ndarray:
    """A well-conditioned random homography (rotation+scale+shift+mild tilt)."""
    angle = rng.uniform(-0.5, 0.5)
    scale = rng.uniform(0.6, 1.8)
    tx, ty = rng.uniform(-30, 30, size=2)
    p1, p2 = rng.uniform(-1e-4, 1e-4, size=2)
    c, s = math.cos(angle), math.sin(angle)
    return np.array(
        [
            [scale * c, -scale * s, tx],
            [scale * s, scale * c, ty],
            [p1, p2, 1.0],
        ]
    )


def project_pts(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    out = np.empty_like(pts, dtype=np.float64)
    for i, (x, y) in enumerate(pts):
        v = h @ np.array([x, y, 1.0])
        out[i] = v[:2] / v[2]
    return out


def matches_from_arrays(src: np.ndarray, dst: np.ndarray, scores=None):
    scores = np.zeros(len(src)) if scores is None else scores
    return [
        PointMatch(Point2(float(a[0]), float(a[1])), Point2(float(b[0]), float(b[1])), float(s))
        for a, b, s in zip(src, dst, scores)
    ]


def naive_ste(h: np.ndarray, near: np.ndarray, far: np.ndarray) -> float:
    """Independent symmetric-transfer evaluation, one point at a time."""
    inv = np.linalg.inv(h)
    total = 0.0
    for i in range(len(near)):
        f = h @ np.array([near[i][0], near[i][1], 1.0])
        f = f[:2] / f[2]
        total += math.sqrt(((far[i] - f) ** 2).sum())
        bk = inv @ np.array([far[i][0], far[i][1], 1.0])
        bk = bk[:2] / bk[2]
        total += math.sqrt(((near[i] - bk) ** 2).sum())
    return total


def naive_log_fit(points):
    """Normal-equations fit of y = a + b ln(x), written independently."""
    n = len(points)
    sx = sy = sxx = sxy = 0.0
    for x, y in points:
        lx = math.log(x)
        sx += lx
        sy += y
        sxx += lx * lx
        sxy += lx * y
    b = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    a = (sy - b * sx) / n
    return a, b


def naive_median_scale(near: np.ndarray, far: np.ndarray) -> float:
    ratios = []
    for i in range(len(near)):
        for j in range(i + 1, len(near)):
            dn = math.dist(near[i], near[j])
            df = math.dist(far[i], far[j])
            ratios.append(dn / df)
    ratios.sort()
    n = len(ratios)
    if n % 2:
        return ratios[n // 2]
    return (ratios[n // 2 - 1] + ratios[n // 2]) / 2.0


# ---------------------------------------------------------------------------
# Epipolar scene synthesis

# Convention used everywhere: the pose (R, t) places camera B in camera A's
# frame, X_a = R @ X_b + t.  Camera A looks down +z; scene points sit in
# front of both cameras.


def rotation_xyz(rx: float, ry: float, rz: float) -> np.ndarray:
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def essential_from_pose(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Closed-form E for the pose convention above: E = [t']x R' with
    R' = R^T, t' = -R^T t (so that b^T E a = 0)."""
    r_fw = r.T
    t_fw = -r.T @ t
    tx = np.array(
        [
            [0.0, -t_fw[2], t_fw[1]],
            [t_fw[2], 0.0, -t_fw[0]],
            [-t_fw[1], t_fw[0], 0.0],
        ]
    )
    return tx @ r_fw


def synthetic_scene(
    rng,
    n_points: int,
    r: np.ndarray,
    t: np.ndarray,
    k: CameraIntrinsics | None = None,
    noise: float = 0.0,
):
    """Project random forward-scene points into both cameras.

    Returns a list of ``PointMatch`` (pixel coordinates when ``k`` is given,
    normalized camera coordinates otherwise).
    """
    pts_a = []
    pts_b = []
    r_fw = r.T
    t_fw = -r.T @ t
    while len(pts_a) < n_points:
        x = rng.uniform(-2.0, 2.0)
        y = rng.uniform(-1.5, 1.5)
        z = rng.uniform(4.0, 12.0)
        xa = np.array([x, y, z])
        xb = r_fw @ xa + t_fw
        if xb[2] <= 0.5:
            continue
        pa = xa[:2] / xa[2]
        pb = xb[:2] / xb[2]
        if k is not None:
            pa = np.array([k.fx * pa[0] + k.cx, k.fy * pa[1] + k.cy])
            pb = np.array([k.fx * pb[0] + k.cx, k.fy * pb[1] + k.cy])
        if noise > 0:
            pa = pa + rng.normal(0.0, noise, size=2)
            pb = pb + rng.normal(0.0, noise, size=2)
        pts_a.append(pa)
        pts_b.append(pb)
    return matches_from_arrays(np.array(pts_a), np.array(pts_b))


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two vectors in degrees."""
    c = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


# ---------------------------------------------------------------------------
# Synthetic imagery


def blob_texture(rng, h: int, w: int, n_blobs: int = 40, color: bool = True) -> np.ndarray:
    """Random smooth blobs: feature-rich, analytic, reproducible."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3))
    for _ in range(n_blobs):
        cx = rng.uniform(4, w - 4)
        cy = rng.uniform(4, h - 4)
        sigma = rng.uniform(2.5, 8.0)
        amp = rng.uniform(0.4, 1.0)
        col = rng.uniform(0.2, 1.0, size=3) if color else np.ones(3)
        g = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2))
        img += amp * g[..., None] * col
    peak = img.max()
    if peak > 0:
        img /= peak
    return np.clip(img, 0.0, 1.0)


def blob_image_gray(rng, h: int, w: int, n_blobs: int = 40) -> np.ndarray:
    return blob_texture(rng, h, w, n_blobs, color=False)[..., 0]


def rich_texture(rng, h: int, w: int, n_small: int = 60, n_big: int = 15) -> np.ndarray:
    """Mid-gray canvas with signed color blobs at two scales.

    Dense enough in corners and edges to feed the whole pipeline: plenty of
    point features plus blob-scale structure for region proposals.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w, 3), 0.5)
    for _ in range(n_big):
        cx, cy = rng.uniform(6, w - 6), rng.uniform(6, h - 6)
        s = rng.uniform(5, 10)
        amp = rng.uniform(0.3, 0.6) * rng.choice([-1, 1])
        col = rng.uniform(0.5, 1.0, 3)
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))[..., None] * col
    for _ in range(n_small):
        cx, cy = rng.uniform(4, w - 4), rng.uniform(4, h - 4)
        s = rng.uniform(1.5, 3.5)
        amp = rng.uniform(0.5, 0.9) * rng.choice([-1, 1])
        col = rng.uniform(0.5, 1.0, 3)
        img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))[..., None] * col
    return np.clip(img, 0.0, 1.0)

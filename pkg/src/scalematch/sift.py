"""Scale-invariant keypoint detection and description.

Difference-of-Gaussians pyramid, iterative sub-pixel extremum refinement,
contrast and edge rejection, multi-peak orientation assignment, and 4x4x8
gradient-histogram descriptors.  Keypoint coordinates stay in native pixel
units of the input image (no initial upsampling octave), so they can be fed
directly to pixel-threshold RANSAC.

Output ordering is deterministic: features are sorted by octave, scale, y,
x, then orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall
from .geometry import Point2
from .imageops import to_gray

# Assumed blur of the raw input, border handling for all Gaussian filtering
_CAMERA_SIGMA = 0.5
_BORDER_MODE = "mirror"
_EXTREMUM_BORDER = 5
_MAX_REFINE_STEPS = 5
_ORI_BINS = 36
_ORI_SIGMA_FACTOR = 1.5
_ORI_PEAK_RATIO = 0.8
_DESC_WIDTH = 4
_DESC_ORI_BINS = 8
_DESC_SCALE_FACTOR = 3.0
_DESC_CLAMP = 0.2


@dataclass(frozen=True)
class SiftParams:
    octave_layers: int = 3
    initial_sigma: float = 1.6
    edge_threshold: float = 10.0
    contrast_threshold: float = 0.04

    def __post_init__(self):
        if self.octave_layers < 1:
            raise ValueError("octave_layers must be >= 1")
        if min(self.initial_sigma, self.edge_threshold, self.contrast_threshold) <= 0:
            raise ValueError("SIFT parameters must be positive")


@dataclass(frozen=True)
class SiftFeature:
    """A detected keypoint with its 128-dimensional descriptor."""

    location: Point2
    scale: float
    orientation: float
    descriptor: np.ndarray

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("feature scale must be positive")
        if not 0.0 <= self.orientation < 2.0 * math.pi:
            raise ValueError("orientation must lie in [0, 2*pi)")


def _gaussian(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma < 1e-8:
        return img.copy()
    return ndimage.gaussian_filter(img, sigma, mode=_BORDER_MODE, truncate=4.0)


def _num_octaves(h: int, w: int) -> int:
    return max(1, int(math.floor(math.log2(min(h, w)))) - 3)


def _build_pyramid(base: np.ndarray, params: SiftParams, n_octaves: int):
    s = params.octave_layers
    k = 2.0 ** (1.0 / s)
    sigmas = [params.initial_sigma * k**i for i in range(s + 3)]
    increments = [
        math.sqrt(max(sigmas[i] ** 2 - sigmas[i - 1] ** 2, 1e-12))
        for i in range(1, s + 3)
    ]

    gaussians: list[list[np.ndarray]] = []
    current = base
    for _ in range(n_octaves):
        level = [current]
        for inc in increments:
            level.append(_gaussian(level[-1], inc))
        gaussians.append(level)
        current = level[s][::2, ::2]
    dogs = [
        np.stack([lvl[i + 1] - lvl[i] for i in range(len(lvl) - 1)])
        for lvl in gaussians
    ]
    return gaussians, dogs


def _candidate_extrema(dog: np.ndarray, prefilter: float) -> np.ndarray:
    """Indices (layer, row, col) of interior 26-neighborhood extrema."""
    mx = ndimage.maximum_filter(dog, size=3, mode="constant", cval=-np.inf)
    mn = ndimage.minimum_filter(dog, size=3, mode="constant", cval=np.inf)
    cand = ((dog == mx) | (dog == mn)) & (np.abs(dog) > prefilter)
    cand[0] = cand[-1] = False
    m = _EXTREMUM_BORDER
    mask = np.zeros_like(cand)
    if dog.shape[1] > 2 * m and dog.shape[2] > 2 * m:
        mask[:, m:-m, m:-m] = True
    return np.argwhere(cand & mask)


def _refine_extremum(dog: np.ndarray, layer: int, row: int, col: int, n_layers: int):
    """Iterative 3-D quadratic fit; returns (layer, row, col, offset, value)."""
    h, w = dog.shape[1:]
    for _ in range(_MAX_REFINE_STEPS):
        cube = dog[layer - 1 : layer + 2, row - 1 : row + 2, col - 1 : col + 2]
        center = cube[1, 1, 1]
        grad = np.array(
            [
                (cube[1, 1, 2] - cube[1, 1, 0]) / 2.0,
                (cube[1, 2, 1] - cube[1, 0, 1]) / 2.0,
                (cube[2, 1, 1] - cube[0, 1, 1]) / 2.0,
            ]
        )
        dxx = cube[1, 1, 2] - 2.0 * center + cube[1, 1, 0]
        dyy = cube[1, 2, 1] - 2.0 * center + cube[1, 0, 1]
        dss = cube[2, 1, 1] - 2.0 * center + cube[0, 1, 1]
        dxy = (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0]) / 4.0
        dxs = (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0]) / 4.0
        dys = (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1]) / 4.0
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            value = center + 0.5 * float(grad @ offset)
            return layer, row, col, offset, value, (dxx, dyy, dxy)
        col += int(round(offset[0]))
        row += int(round(offset[1]))
        layer += int(round(offset[2]))
        if not (
            1 <= layer <= n_layers
            and _EXTREMUM_BORDER <= row < h - _EXTREMUM_BORDER
            and _EXTREMUM_BORDER <= col < w - _EXTREMUM_BORDER
        ):
            return None
    return None


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    return gx, gy


def _orientation_angles(gx, gy, row, col, sigma_ori) -> list[float]:
    """Peak angles of the Gaussian-weighted gradient-direction histogram."""
    h, w = gx.shape
    radius = int(round(3.0 * sigma_ori))
    r0, r1 = max(row - radius, 1), min(row + radius, h - 2)
    c0, c1 = max(col - radius, 1), min(col + radius, w - 2)
    if r0 > r1 or c0 > c1:
        return []
    wy = np.arange(r0, r1 + 1) - row
    wx = np.arange(c0, c1 + 1) - col
    dgy, dgx = np.meshgrid(wy, wx, indexing="ij")
    sub_gx = gx[r0 : r1 + 1, c0 : c1 + 1]
    sub_gy = gy[r0 : r1 + 1, c0 : c1 + 1]
    mag = np.hypot(sub_gx, sub_gy)
    ang = np.arctan2(sub_gy, sub_gx) % (2.0 * math.pi)
    weight = np.exp(-(dgx**2 + dgy**2) / (2.0 * sigma_ori**2))
    bins = np.round(ang * (_ORI_BINS / (2.0 * math.pi))).astype(int) % _ORI_BINS
    hist = np.bincount(bins.ravel(), weights=(mag * weight).ravel(), minlength=_ORI_BINS)

    # single circular smoothing pass, 5-tap binomial kernel
    smooth = (
        6.0 * hist
        + 4.0 * (np.roll(hist, 1) + np.roll(hist, -1))
        + (np.roll(hist, 2) + np.roll(hist, -2))
    ) / 16.0
    peak = smooth.max()
    if peak <= 0:
        return []
    left = np.roll(smooth, 1)
    right = np.roll(smooth, -1)
    angles = []
    for i in np.nonzero((smooth > left) & (smooth > right) & (smooth >= _ORI_PEAK_RATIO * peak))[0]:
        denom = smooth[i - 1] - 2.0 * smooth[i] + smooth[(i + 1) % _ORI_BINS]
        interp = i + (0.5 * (smooth[i - 1] - smooth[(i + 1) % _ORI_BINS]) / denom if denom != 0 else 0.0)
        angles.append((interp % _ORI_BINS) * (2.0 * math.pi / _ORI_BINS))
    return angles


def _descriptor(gx, gy, x_oct, y_oct, scale_oct, orientation) -> np.ndarray | None:
    """4x4 spatial x 8 orientation gradient histogram, trilinearly binned."""
    h, w = gx.shape
    hist_width = _DESC_SCALE_FACTOR * scale_oct
    radius = int(round(hist_width * math.sqrt(2) * (_DESC_WIDTH + 1) * 0.5))
    radius = min(radius, int(math.sqrt(h**2 + w**2)))
    row_c = int(round(y_oct))
    col_c = int(round(x_oct))
    r0, r1 = max(row_c - radius, 1), min(row_c + radius, h - 2)
    c0, c1 = max(col_c - radius, 1), min(col_c + radius, w - 2)
    if r0 > r1 or c0 > c1:
        return None

    rows = np.arange(r0, r1 + 1, dtype=np.float64)
    cols = np.arange(c0, c1 + 1, dtype=np.float64)
    dy, dx = np.meshgrid(rows - y_oct, cols - x_oct, indexing="ij")
    cos_t = math.cos(orientation)
    sin_t = math.sin(orientation)
    x_rot = (cos_t * dx + sin_t * dy) / hist_width
    y_rot = (-sin_t * dx + cos_t * dy) / hist_width
    row_bin = y_rot + 0.5 * _DESC_WIDTH - 0.5
    col_bin = x_rot + 0.5 * _DESC_WIDTH - 0.5

    keep = (row_bin > -1.0) & (row_bin < _DESC_WIDTH) & (col_bin > -1.0) & (col_bin < _DESC_WIDTH)
    if not np.any(keep):
        return None
    sub_gx = gx[r0 : r1 + 1, c0 : c1 + 1][keep]
    sub_gy = gy[r0 : r1 + 1, c0 : c1 + 1][keep]
    row_bin = row_bin[keep]
    col_bin = col_bin[keep]
    mag = np.hypot(sub_gx, sub_gy)
    weight = np.exp(-(x_rot[keep] ** 2 + y_rot[keep] ** 2) / (2.0 * (0.5 * _DESC_WIDTH) ** 2))
    value = mag * weight
    ang = (np.arctan2(sub_gy, sub_gx) - orientation) % (2.0 * math.pi)
    ori_bin = ang * (_DESC_ORI_BINS / (2.0 * math.pi))

    rf = np.floor(row_bin).astype(int)
    cf = np.floor(col_bin).astype(int)
    of = np.floor(ori_bin).astype(int)
    fr = row_bin - rf
    fc = col_bin - cf
    fo = ori_bin - of

    hist = np.zeros((_DESC_WIDTH + 2, _DESC_WIDTH + 2, _DESC_ORI_BINS))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            for do, wo in ((0, 1.0 - fo), (1, fo)):
                np.add.at(
                    hist,
                    (rf + 1 + dr, cf + 1 + dc, (of + do) % _DESC_ORI_BINS),
                    value * wr * wc * wo,
                )
    vec = hist[1 : 1 + _DESC_WIDTH, 1 : 1 + _DESC_WIDTH, :].ravel()

    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec = np.minimum(vec / norm, _DESC_CLAMP)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    # renormalize, then clamp once more so entries stay within the cap and
    # the norm stays <= 1
    vec = np.minimum(vec / norm, _DESC_CLAMP)
    return vec


def detect_and_describe(image: np.ndarray, params: SiftParams = SiftParams()) -> list[SiftFeature]:
    """Detect DoG keypoints and compute their descriptors.

    ``image`` is a gray or RGB array (uint8 or float in [0, 1]); RGB input
    is converted to luma first.  Requires at least 16x16 pixels.
    """
    gray = to_gray(image)
    h, w = gray.shape
    if min(h, w) < 16:
        raise ImageTooSmall(f"need at least 16x16 pixels, got {w}x{h}")

    base = _gaussian(
        gray.astype(np.float64),
        math.sqrt(max(params.initial_sigma**2 - _CAMERA_SIGMA**2, 0.01)),
    )
    n_octaves = _num_octaves(h, w)
    gaussians, dogs = _build_pyramid(base, params, n_octaves)
    s = params.octave_layers
    prefilter = 0.5 * params.contrast_threshold / s
    r_edge = params.edge_threshold
    edge_limit = (r_edge + 1.0) ** 2 / r_edge

    grad_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def grads(o: int, layer: int):
        key = (o, layer)
        if key not in grad_cache:
            grad_cache[key] = _gradients(gaussians[o][layer])
        return grad_cache[key]

    raw: list[tuple] = []
    for o in range(n_octaves):
        dog = dogs[o]
        for layer, row, col in _candidate_extrema(dog, prefilter):
            refined = _refine_extremum(dog, int(layer), int(row), int(col), s)
            if refined is None:
                continue
            lyr, r, c, offset, value, (dxx, dyy, dxy) = refined
            if abs(value) < params.contrast_threshold:
                continue
            tr = dxx + dyy
            det = dxx * dyy - dxy * dxy
            if det <= 0 or tr * tr / det >= edge_limit:
                continue
            x_oct = c + offset[0]
            y_oct = r + offset[1]
            layer_f = lyr + offset[2]
            scale_oct = params.initial_sigma * 2.0 ** (layer_f / s)
            gx, gy = grads(o, lyr)
            for angle in _orientation_angles(gx, gy, r, c, _ORI_SIGMA_FACTOR * scale_oct):
                desc = _descriptor(gx, gy, x_oct, y_oct, scale_oct, angle)
                if desc is None:
                    continue
                raw.append(
                    (o, scale_oct * 2.0**o, y_oct * 2.0**o, x_oct * 2.0**o, angle, desc)
                )

    raw.sort(key=lambda f: (f[0], f[1], f[2], f[3], f[4]))
    features: list[SiftFeature] = []
    seen: set[tuple] = set()
    for o, scale, y, x, angle, desc in raw:
        key = (x, y, scale, angle)
        if key in seen:
            continue
        seen.add(key)
        features.append(SiftFeature(Point2(x, y), scale, angle, desc))
    return features

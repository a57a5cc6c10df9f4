"""Array-level image utilities: I/O, color conversion, resampling, warping.

Images are numpy arrays, gray ``(H, W)`` or RGB ``(H, W, 3)``, float64 in
``[0, 1]``.  Loaders convert 8-bit files at the boundary; everything inside
the package stays float.  Pixel centers sit on integer coordinates, x runs
along columns, y along rows.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def load_rgb(path) -> np.ndarray:
    """Read an image file as float RGB in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_rgb(path, image: np.ndarray) -> None:
    """Write a float [0, 1] RGB (or gray) array as an 8-bit image file."""
    arr = np.asarray(image, dtype=np.float64)
    data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def as_float_image(image: np.ndarray) -> np.ndarray:
    """Coerce an array to float64, scaling 8-bit data down to [0, 1]."""
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luma conversion (Rec. 601 weights); 2-D inputs pass through."""
    arr = as_float_image(image)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        w = np.asarray(LUMA_WEIGHTS)
        return arr @ w
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {arr.shape}")


def sample_bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinearly sample ``image`` at continuous (x, y) locations.

    Coordinates are clamped to the image border, so samples never read
    outside the array.  ``xs``/``ys`` may have any common shape; the result
    has that shape (plus a channel axis for RGB input).
    """
    arr = as_float_image(image)
    h, w = arr.shape[:2]
    x = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)

    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if arr.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    top = arr[y0, x0] * (1.0 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1.0 - fx) + arr[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize with center-aligned bilinear sampling.

    Output pixel ``(i, j)`` samples the source at
    ``((j + 0.5) * w/out_w - 0.5, (i + 0.5) * h/out_h - 0.5)``, which makes a
    same-size resize an exact copy.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    arr = as_float_image(image)
    h, w = arr.shape[:2]
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return sample_bilinear(arr, gx, gy)


def warp_homography(image: np.ndarray, h_matrix: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Render ``image`` under a homography into an ``out_h x out_w`` canvas.

    ``h_matrix`` maps source coordinates to destination coordinates; each
    destination pixel is sampled at its inverse image (bilinear, clamped).
    """
    hm = np.asarray(h_matrix, dtype=np.float64)
    inv = np.linalg.inv(hm)
    gx, gy = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    ones = np.ones_like(gx)
    src = np.tensordot(inv, np.stack([gx, gy, ones]), axes=1)
    wcoord = src[2]
    wcoord = np.where(np.abs(wcoord) < 1e-12, 1e-12, wcoord)
    return sample_bilinear(image, src[0] / wcoord, src[1] / wcoord)


def rgb_to_hsv(image: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV for float [0, 1] images; all channels in [0, 1]."""
    arr = as_float_image(image)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    maxc = arr.max(axis=-1)
    minc = arr.min(axis=-1)
    delta = maxc - minc

    hue = np.zeros_like(maxc)
    nz = delta > 0
    rmax = nz & (maxc == r)
    gmax = nz & ~rmax & (maxc == g)
    bmax = nz & ~rmax & ~gmax
    with np.errstate(invalid="ignore", divide="ignore"):
        hue[rmax] = ((g - b)[rmax] / delta[rmax]) % 6.0
        hue[gmax] = (b - r)[gmax] / delta[gmax] + 2.0
        hue[bmax] = (r - g)[bmax] / delta[bmax] + 4.0
    hue /= 6.0

    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([hue, sat, maxc], axis=-1)

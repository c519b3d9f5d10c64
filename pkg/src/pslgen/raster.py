"""Image buffers, Otsu thresholding, and square-kernel binary morphology.

Raster conventions: color images are (H, W, 3) float arrays in [0, 1],
gray buffers are (H, W) float, masks are (H, W) uint8 in {0, 1}.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ConstantInput, ShapeMismatch

OTSU_BINS = 256


def as_mask(a: np.ndarray) -> np.ndarray:
    return (np.asarray(a) > 0).astype(np.uint8)


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ShapeMismatch(f"{a.shape[:2]} vs {b.shape[:2]}")


def grayscale(image: np.ndarray) -> np.ndarray:
    """Channel-mean luminance."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        return img
    return img.mean(axis=2)


def otsu_threshold(values: np.ndarray) -> float:
    """Threshold minimizing intra-class variance over a 256-bin histogram
    spanning the data range. Returns the center of the best split bin;
    ties go to the lowest threshold. Raises ConstantInput when the data
    has no spread.

    The split decision runs in exact integer arithmetic on the bin scale
    (bin k carries value 2k+1; the argmin is invariant under that affine
    normalization, ties included), so near-tied splits never depend on
    floating-point rounding.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ConstantInput("empty buffer")
    lo = float(v.min())
    hi = float(v.max())
    if hi - lo < 1e-12:
        raise ConstantInput(f"value spread {hi - lo:g} < 1e-12")

    hist, edges = np.histogram(v, bins=OTSU_BINS, range=(lo, hi))
    counts = [int(c) for c in hist]
    vals = [2 * k + 1 for k in range(OTSU_BINS)]
    total_w = sum(counts)
    total_s = sum(c * x for c, x in zip(counts, vals))

    # minimizing intra-class variance == maximizing s0^2/w0 + s1^2/w1;
    # class 0 = bins [0..k], class 1 = the rest
    best_k = 0
    best_num, best_den = -1, 1
    w0 = s0 = 0
    for k in range(OTSU_BINS):
        w0 += counts[k]
        s0 += counts[k] * vals[k]
        w1 = total_w - w0
        s1 = total_s - s0
        if w0 == 0:
            num, den = s1 * s1, w1
        elif w1 == 0:
            num, den = s0 * s0, w0
        else:
            num, den = s0 * s0 * w1 + s1 * s1 * w0, w0 * w1
        if num * best_den > best_num * den:  # strict: ties keep the lowest k
            best_num, best_den, best_k = num, den, k
    return float(0.5 * (edges[best_k] + edges[best_k + 1]))


def _structure(radius: int) -> np.ndarray:
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def erode(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Square-kernel erosion; out-of-bounds neighbors count as background,
    so foreground shrinks at image borders."""
    m = as_mask(mask)
    return ndimage.binary_erosion(m, structure=_structure(radius), border_value=0).astype(np.uint8)


def dilate(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Square-kernel dilation; out-of-bounds neighbors count as background."""
    m = as_mask(mask)
    return ndimage.binary_dilation(m, structure=_structure(radius), border_value=0).astype(np.uint8)


def morph(mask: np.ndarray, kind: str, radius: int = 1) -> np.ndarray:
    if kind == "erode":
        return erode(mask, radius)
    if kind == "dilate":
        return dilate(mask, radius)
    raise ValueError(f"unknown morphology kind {kind!r}")


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize; preserves binarity."""
    m = np.asarray(mask)
    h, w = m.shape[:2]
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(int)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(int)
    return m[rows][:, cols]

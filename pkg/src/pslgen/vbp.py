"""Saliency back-projection from rectified activation stacks, plus the
cost-softmax weighting and weighted averaging used to pool many saliency
maps into one.

The back-projection walks the layer list deep-to-shallow: channel-average
each layer, upsample the running map to the previous layer's resolution
with an all-ones transposed convolution of that layer's (kernel, stride),
and multiply pointwise. The result is min-max normalized to [0, 1].
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .recognizer import ActivationStack


def upsample_ones(m: np.ndarray, kernel: int, stride: int, out_shape: tuple[int, int]) -> np.ndarray:
    """Transposed convolution with an all-ones kernel; overlapping
    contributions sum. The full output is center-trimmed (or zero-padded)
    to out_shape so stride-1 layers behave like 'same' smoothing."""
    h, w = m.shape
    fh = (h - 1) * stride + kernel
    fw = (w - 1) * stride + kernel
    full = np.zeros((fh, fw))
    for dy in range(kernel):
        for dx in range(kernel):
            full[dy : dy + h * stride : stride, dx : dx + w * stride : stride] += m
    oh, ow = out_shape
    ty = (fh - oh) // 2
    tx = (fw - ow) // 2
    if ty < 0 or tx < 0:
        out = np.zeros(out_shape)
        out[-ty : -ty + fh, -tx : -tx + fw] = full
        return out
    return full[ty : ty + oh, tx : tx + ow]


def normalize_unit(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1]. A constant map collapses to all-zeros
    when the constant is zero (no evidence) and all-ones otherwise
    (uniform evidence)."""
    v = np.asarray(values, dtype=float)
    lo = float(v.min())
    hi = float(v.max())
    if hi - lo < 1e-12:
        return np.zeros_like(v) if abs(hi) <= 1e-12 else np.ones_like(v)
    return (v - lo) / (hi - lo)


def visual_backprop(layers: list[ActivationStack]) -> np.ndarray:
    """Back-project a shallow-to-deep activation stack into a [0, 1]
    saliency map at the shallowest layer's resolution."""
    if not layers:
        raise ValueError("need at least one activation layer")
    for shallow, deep in zip(layers, layers[1:]):
        if deep.height != (shallow.height + deep.stride - 1) // deep.stride or deep.width != (
            shallow.width + deep.stride - 1
        ) // deep.stride:
            raise ShapeMismatch(
                f"layer {deep.values.shape} inconsistent with stride {deep.stride} "
                f"from {shallow.values.shape}"
            )
    means = [layer.channel_mean() for layer in layers]
    m = means[-1]
    for i in range(len(layers) - 1, 0, -1):
        m = upsample_ones(m, layers[i].kernel, layers[i].stride, means[i - 1].shape)
        m = m * means[i - 1]
    if layers[0].stride > 1:
        target = (layers[0].height * layers[0].stride, layers[0].width * layers[0].stride)
        m = upsample_ones(m, layers[0].kernel, layers[0].stride, target)
    return normalize_unit(m)


def softmax_weights(costs: np.ndarray) -> np.ndarray:
    """Softmax of (max cost - cost) over every entry; low-cost entries get
    the largest weights. Positive, sums to one, shift invariant."""
    c = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    z = c.max() - c
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def weighted_average_spm(maps: list[np.ndarray] | np.ndarray, weights) -> np.ndarray:
    """Plain weighted sum of same-resolution saliency maps (weights are
    expected to be convex; the sum is not re-normalized)."""
    arr = np.asarray(maps, dtype=float)
    w = np.asarray(weights, dtype=float).ravel()
    if arr.ndim != 3 or arr.shape[0] != w.size:
        raise ShapeMismatch(f"{arr.shape} maps vs {w.size} weights")
    if abs(w.sum() - 1.0) > 1e-6:
        raise ValueError(f"weights sum to {w.sum():g}, expected 1")
    return np.tensordot(w, arr, axes=1)

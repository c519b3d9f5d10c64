"""Comparison pseudo-label generators: quad interior, center-peaked soft
pyramid, and color-model graph cut seeded from the box alone."""

from __future__ import annotations

import numpy as np

from .geometry import (
    canonical_quad,
    points_in_quad,
    project_points,
    rect_corners,
    solve_homography,
)
from .graphcut import BG, PFG, grabcut_refine_detailed

PYRAMID_BINARIZE_AT = 0.5
GRABCUT_BOX_ITERS = 5


def _pixel_centers(w: int, h: int) -> np.ndarray:
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    return np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5])


def naive_psl(quad: np.ndarray, w: int, h: int) -> np.ndarray:
    """Foreground = every pixel whose center lies inside or on the quad."""
    q = canonical_quad(quad)
    inside = points_in_quad(_pixel_centers(w, h), q)
    return inside.reshape(h, w).astype(np.uint8)


def pyramid_psl(quad: np.ndarray, w: int, h: int) -> np.ndarray:
    """Soft label that peaks at 1 in the quad center and decays linearly
    (in Chebyshev distance on the unit square) to 0 at the edges."""
    q = canonical_quad(quad)
    to_unit = solve_homography(q, rect_corners(1.0, 1.0))
    uv = project_points(to_unit, _pixel_centers(w, h))
    inside = (
        (uv[:, 0] >= 0.0) & (uv[:, 0] <= 1.0) & (uv[:, 1] >= 0.0) & (uv[:, 1] <= 1.0)
    )
    value = 1.0 - 2.0 * np.maximum(np.abs(uv[:, 0] - 0.5), np.abs(uv[:, 1] - 0.5))
    value = np.where(inside, np.maximum(value, 0.0), 0.0)
    return value.reshape(h, w)


def binarize_pyramid(soft: np.ndarray, threshold: float = PYRAMID_BINARIZE_AT) -> np.ndarray:
    return (np.asarray(soft) > threshold).astype(np.uint8)


def grabcut_box_psl(image: np.ndarray, quad: np.ndarray, seed: int = 0) -> tuple[np.ndarray, list[str]]:
    """Graph-cut label seeded from the quad alone: outside is hard
    background, the whole interior starts as probable foreground. Returns
    (mask, flags)."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape[:2]
    q = canonical_quad(quad)
    interior = points_in_quad(_pixel_centers(w, h), q).reshape(h, w)

    flags: list[str] = []
    trimap = np.where(interior, PFG, BG).astype(np.uint8)
    if not (trimap == BG).any():
        # quad covers the whole image: force a 1-pixel border so the
        # background model has samples
        trimap[0, :] = BG
        trimap[-1, :] = BG
        trimap[:, 0] = BG
        trimap[:, -1] = BG
        flags.append("forced-border-bg")

    if float(np.ptp(img)) < 1e-12:
        # uniform image: the color models cannot separate anything; keep
        # the initial segmentation (the full interior) and flag it
        flags.append("degenerate-uniform")
        mask = (trimap == PFG).astype(np.uint8)
        return mask, flags

    run = grabcut_refine_detailed(img, trimap, GRABCUT_BOX_ITERS, seed)
    if run.all_hard:
        flags.append("all-pixels-hard")
    mask = run.mask.astype(np.uint8)
    mask[~interior] = 0
    return mask, flags

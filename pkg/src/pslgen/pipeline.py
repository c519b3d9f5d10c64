"""Recognition-guided pseudo-label generation for a single instance.

The procedure: crop the annotated quad to recognizer resolution, mine a
saliency map from an ensemble of augmented predictions, then binary-search
a gain on the map's Otsu threshold for the smallest mask whose attention
crop the ensemble still reads at a cost below the feasibility threshold.
Every candidate mask is cleaned by trimap-constrained graph cuts.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConstantInput
from .geometry import (
    canonical_quad,
    invert_homography,
    rect_corners,
    solve_homography,
    warp_crop,
    warp_image,
)
from .graphcut import build_trimap, demote_hard_foreground, grabcut_refine
from .raster import otsu_threshold
from .recognizer import CROP_H, CROP_W, RecognitionModel, recognition_cost
from .vbp import softmax_weights, visual_backprop, weighted_average_spm

PERSPECTIVE_JITTER = 0.08  # corner displacement bound, fraction of crop size
RESCALE_RANGE = (0.85, 1.15)
SHIFT_FRACTION = 0.05
PHOTOMETRIC_JITTER = 0.15
NOISE_SIGMA_MAX = 0.02


@dataclasses.dataclass
class PipelineConfig:
    t_max: int = 4
    n_samples: int = 32
    s1: float = 1.0
    fg_min: int = 16
    fill: tuple[float, float, float] = (0.5, 0.5, 0.5)
    alpha0: float = 1.0
    seed: int = 0
    morph_radius: int = 1
    grabcut_iters: int = 5
    case_insensitive: bool = True

    def __post_init__(self):
        if self.t_max < 0 or self.n_samples < 1 or self.fg_min < 0:
            raise ValueError("t_max >= 0, n_samples >= 1, fg_min >= 0 required")


@dataclasses.dataclass
class AugmentedSet:
    """Augmented crops plus the inverse of each sample's geometric
    transform (identity for photometric-only changes)."""

    crops: list[np.ndarray]
    inverses: list[np.ndarray]  # maps augmented coords back to crop coords


@dataclasses.dataclass(frozen=True)
class SearchState:
    """Registers of the gain binary search."""

    alpha: float
    lower: float
    upper: float
    alpha_star: float
    s_star: float = math.inf
    t: int = 0
    feasible_found: bool = False


@dataclasses.dataclass
class PslResult:
    mask: np.ndarray  # at crop resolution
    crop_to_image: np.ndarray  # homography mapping crop coords to image
    alpha_star: float
    flags: list[str] = dataclasses.field(default_factory=list)
    probed: list[tuple[float, float]] = dataclasses.field(default_factory=list)  # (alpha, cost)
    candidate_calls: int = 0


def sample_augmentations(crop: np.ndarray, n: int, seed: int, fill=(0.5, 0.5, 0.5)) -> AugmentedSet:
    """n draws from the augmentation distribution (perspective corner
    jitter, rescale, shift, brightness/contrast, additive noise). Sample 0
    is always the identity. Geometric pieces compose into one homography
    whose inverse is returned per sample."""
    if n < 1:
        raise ValueError("need at least one sample")
    img = np.asarray(crop, dtype=float)
    h, w = img.shape[:2]
    base = rect_corners(w, h)
    identity = np.eye(3)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA46)))

    crops = [img.copy()]
    inverses = [identity.copy()]
    for _ in range(1, n):
        scale = rng.uniform(*RESCALE_RANGE)
        shift = rng.uniform(-SHIFT_FRACTION, SHIFT_FRACTION, size=2) * (w, h)
        jitter = rng.uniform(-PERSPECTIVE_JITTER, PERSPECTIVE_JITTER, size=(4, 2)) * (w, h)
        center = np.array([w / 2.0, h / 2.0])
        corners = (base - center) * scale + center + shift + jitter
        fwd = solve_homography(base, corners)  # crop coords -> augmented coords
        inv = invert_homography(fwd)
        warped = warp_crop(img, inv, w, h, fill=fill)

        contrast = 1.0 + rng.uniform(-PHOTOMETRIC_JITTER, PHOTOMETRIC_JITTER)
        brightness = rng.uniform(-PHOTOMETRIC_JITTER, PHOTOMETRIC_JITTER)
        sigma = rng.uniform(0.0, NOISE_SIGMA_MAX)
        warped = (warped - 0.5) * contrast + 0.5 + brightness
        warped = warped + rng.normal(0.0, sigma, size=warped.shape)
        crops.append(np.clip(warped, 0.0, 1.0))
        inverses.append(inv)
    return AugmentedSet(crops, inverses)


def evaluate_ensemble(
    augset: AugmentedSet,
    models: list[RecognitionModel],
    y: str,
    case_insensitive: bool = True,
    want_spms: bool = False,
) -> tuple[np.ndarray, float, np.ndarray | None]:
    """Predict every (crop, model) pair; cost = edit distance to y. When
    saliency is requested, each map is back-projected and inverse-warped
    into the original crop frame."""
    if not models:
        raise ValueError("need at least one model")
    j_n = len(augset.crops)
    k_n = len(models)
    costs = np.empty((j_n, k_n))
    spms = np.empty((j_n, k_n, augset.crops[0].shape[0], augset.crops[0].shape[1])) if want_spms else None
    for j, crop in enumerate(augset.crops):
        h, w = crop.shape[:2]
        for k, model in enumerate(models):
            text, layers = model.predict(crop)
            costs[j, k] = recognition_cost(text, y, case_insensitive)
            if want_spms:
                spm = visual_backprop(layers)
                fwd = invert_homography(augset.inverses[j])
                spms[j, k] = warp_image(spm, fwd, w, h, fill=0.0)
    return costs, float(costs.mean()), spms


def binary_search_step(state: SearchState, s_t: float, s1: float) -> SearchState:
    """One gain-search update.

    Best tracking: before any feasible candidate the minimum-cost gain is
    kept; from the first feasible candidate on, only feasible gains larger
    than the incumbent replace it. Bounds: cost above the threshold pulls
    the gain down toward the lower bound (grow the mask), otherwise up
    toward the upper bound (shrink it); equality rides the upward branch.
    """
    alpha, lower, upper = state.alpha, state.lower, state.upper
    alpha_star, s_star = state.alpha_star, state.s_star
    feasible_found = state.feasible_found

    if not feasible_found:
        if s_t < s_star:
            alpha_star = alpha
            s_star = s_t
        feasible_found = s_star < s1
    else:
        if s_t < s1 and alpha > alpha_star:
            alpha_star = alpha
        s_star = min(s_star, s_t)

    if s_t > s1:
        new_alpha = (alpha + lower) / 2.0
        upper = alpha
    else:
        new_alpha = (alpha + upper) / 2.0
        lower = alpha

    return SearchState(new_alpha, lower, upper, alpha_star, s_star, state.t + 1, feasible_found)


def mask_attention(crop: np.ndarray, mask: np.ndarray, fill=(0.5, 0.5, 0.5)) -> np.ndarray:
    """Keep foreground pixels, replace everything else with the fill color."""
    img = np.asarray(crop, dtype=float)
    m = (np.asarray(mask) > 0).astype(float)[..., None]
    return img * m + np.asarray(fill, dtype=float) * (1.0 - m)


def generate_candidate(
    crop: np.ndarray,
    alpha: float,
    spm: np.ndarray,
    fg_min: int,
    seed: int,
    morph_radius: int = 1,
    grabcut_iters: int = 5,
) -> np.ndarray:
    """One candidate mask: binarize the saliency map at alpha times its
    Otsu threshold, build the trimap, and run the cut twice if needed --
    first without hard foreground, then (when too few pixels survive) with
    the eroded core pinned as foreground."""
    try:
        base = otsu_threshold(spm)
    except ConstantInput:
        return np.zeros(spm.shape, dtype=np.uint8)  # no evidence, no label
    binary = (np.asarray(spm) > alpha * base).astype(np.uint8)
    trimap = build_trimap(binary, morph_radius)
    first = grabcut_refine(crop, demote_hard_foreground(trimap), grabcut_iters, seed)
    if int(first.sum()) < fg_min:
        return grabcut_refine(crop, trimap, grabcut_iters, seed)
    return first


def _stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence((seed, stage)).generate_state(1)[0])


def generate_psl(
    image: np.ndarray,
    quad: np.ndarray,
    y: str,
    models: list[RecognitionModel],
    cfg: PipelineConfig,
) -> PslResult:
    """Full per-instance procedure: crop, saliency mining, gain search,
    final candidate at the best-known gain."""
    q = canonical_quad(quad)
    crop_to_image = solve_homography(rect_corners(CROP_W, CROP_H), q)
    crop = warp_crop(image, crop_to_image, CROP_W, CROP_H, fill=cfg.fill)

    augset = sample_augmentations(crop, cfg.n_samples, _stage_seed(cfg.seed, 0), fill=cfg.fill)
    costs, _, spms = evaluate_ensemble(augset, models, y, cfg.case_insensitive, want_spms=True)
    weights = softmax_weights(costs)
    spm = weighted_average_spm(spms.reshape(-1, CROP_H, CROP_W), weights.ravel())

    try:
        base = otsu_threshold(spm)
    except ConstantInput:
        return PslResult(
            np.zeros((CROP_H, CROP_W), dtype=np.uint8),
            crop_to_image,
            alpha_star=cfg.alpha0,
            flags=["constant-spm"],
        )

    upper0 = float(spm.max()) / base
    alpha0 = min(max(cfg.alpha0, 0.0), upper0)
    state = SearchState(alpha=alpha0, lower=0.0, upper=upper0, alpha_star=alpha0)
    gc_seed = _stage_seed(cfg.seed, 0x6C)

    result = PslResult(
        np.zeros((CROP_H, CROP_W), dtype=np.uint8), crop_to_image, alpha_star=alpha0
    )
    for t in range(cfg.t_max):
        candidate = generate_candidate(
            crop, state.alpha, spm, cfg.fg_min, gc_seed, cfg.morph_radius, cfg.grabcut_iters
        )
        result.candidate_calls += 1
        focused = mask_attention(crop, candidate, cfg.fill)
        probe_set = sample_augmentations(focused, cfg.n_samples, _stage_seed(cfg.seed, t + 1), fill=cfg.fill)
        _, s_t, _ = evaluate_ensemble(probe_set, models, y, cfg.case_insensitive)
        result.probed.append((state.alpha, s_t))
        state = binary_search_step(state, s_t, cfg.s1)

    result.alpha_star = state.alpha_star
    if not state.feasible_found and cfg.t_max > 0:
        result.flags.append("no-feasible-gain")
    result.mask = generate_candidate(
        crop, state.alpha_star, spm, cfg.fg_min, gc_seed, cfg.morph_radius, cfg.grabcut_iters
    )
    result.candidate_calls += 1
    return result


def psl_to_image_frame(result: PslResult, image_shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor projection of a crop-frame mask into image space
    (pixels outside the crop's quad stay background)."""
    h, w = image_shape[:2]
    inv = invert_homography(result.crop_to_image)  # image -> crop coords
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    pts = np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5])
    denom = inv[2, 0] * pts[:, 0] + inv[2, 1] * pts[:, 1] + inv[2, 2]
    safe = np.abs(denom) > 1e-12
    cx = np.zeros(len(pts))
    cy = np.zeros(len(pts))
    cx[safe] = (inv[0, 0] * pts[safe, 0] + inv[0, 1] * pts[safe, 1] + inv[0, 2]) / denom[safe]
    cy[safe] = (inv[1, 0] * pts[safe, 0] + inv[1, 1] * pts[safe, 1] + inv[1, 2]) / denom[safe]
    ix = np.floor(cx).astype(int)
    iy = np.floor(cy).astype(int)
    ok = safe & (ix >= 0) & (ix < CROP_W) & (iy >= 0) & (iy < CROP_H)
    out = np.zeros(h * w, dtype=np.uint8)
    mask = np.asarray(result.mask)
    out[ok] = mask[iy[ok], ix[ok]]
    return out.reshape(h, w)

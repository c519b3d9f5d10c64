"""Deterministic synthetic text corpus with per-pixel ground truth.

Every instance is a string of built-in font glyphs painted on a rotated
rectangle sized QUAD_CELLS_W x QUAD_CELLS_H font cells, so warping the
annotated quad to the recognizer crop places one font cell on an exact
CELL x CELL pixel block. Ground-truth masks mark glyph ink only.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import font, imgio
from .annotations import Instance, write_annotations
from .recognizer import QUAD_CELLS_H, QUAD_CELLS_W, text_left_margin_cells

BACKGROUND_STYLES = ("solid", "gradient", "noise-texture")


@dataclasses.dataclass
class CorpusSpec:
    images: int = 50
    width: int = 320
    height: int = 240
    min_instances: int = 1
    max_instances: int = 4
    min_text_len: int = 1
    max_text_len: int = 5
    glyph_height: tuple[float, float] = (14.0, 24.0)
    rotation_deg: float = 15.0
    background: str = "noise-texture"
    separation: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.background not in BACKGROUND_STYLES:
            raise ValueError(f"background must be one of {BACKGROUND_STYLES}")
        if not (1 <= self.min_instances <= self.max_instances <= 5):
            raise ValueError("instances per image must lie in 1..5")
        if not (1 <= self.min_text_len <= self.max_text_len <= 5):
            raise ValueError("text length must lie in 1..5")


@dataclasses.dataclass
class RenderedImage:
    image_id: str
    image: np.ndarray  # (H, W, 3) float in [0, 1]
    instances: list[Instance]
    masks: list[np.ndarray]  # per-instance (H, W) uint8 ground truth


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _sample_fg_color(rng: np.random.Generator, bg_mean: float, separation: float) -> np.ndarray:
    """Ink color from the dark or bright pool, whichever is farther from
    the background; pools keep at least `separation` channel distance from
    mid-range backgrounds and clear contrast against the mid-gray fill."""
    lo = max(0.02, 0.5 - separation - 0.1)
    if bg_mean >= 0.5:
        return rng.uniform(0.0, lo, size=3)
    return rng.uniform(1.0 - lo, 1.0, size=3)


def _value_noise(rng: np.random.Generator, h: int, w: int, grid: int = 9) -> np.ndarray:
    """Smooth [-1, 1] field from a bilinearly upsampled random grid."""
    g = rng.uniform(-1.0, 1.0, size=(grid, grid))
    ys = np.linspace(0, grid - 1, h)
    xs = np.linspace(0, grid - 1, w)
    y0 = np.clip(ys.astype(int), 0, grid - 2)
    x0 = np.clip(xs.astype(int), 0, grid - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = g[y0][:, x0]
    b = g[y0][:, x0 + 1]
    c = g[y0 + 1][:, x0]
    d = g[y0 + 1][:, x0 + 1]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def _background(spec: CorpusSpec, rng: np.random.Generator, keep_out: np.ndarray) -> np.ndarray:
    h, w = spec.height, spec.width
    base = rng.uniform(0.3, 0.7, size=3)
    if spec.background == "solid":
        return np.broadcast_to(base, (h, w, 3)).copy()

    corners = np.clip(base + rng.uniform(-0.15, 0.15, size=(4, 3)), 0.2, 0.8)
    fy = np.linspace(0, 1, h)[:, None, None]
    fx = np.linspace(0, 1, w)[None, :, None]
    img = (
        corners[0] * (1 - fy) * (1 - fx)
        + corners[1] * (1 - fy) * fx
        + corners[2] * fy * (1 - fx)
        + corners[3] * fy * fx
    )
    if spec.background == "gradient":
        return img

    # noise-texture: blobby color patches plus a smooth low-amplitude field,
    # both carved away from a ring around glyph ink so text stays legible
    img = img + 0.04 * _value_noise(rng, h, w)[..., None]
    yy, xx = np.mgrid[0:h, 0:w]
    n_blobs = max(4, (h * w) // 2500)
    for _ in range(n_blobs):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        ry = rng.uniform(3, 14)
        rx = rng.uniform(3, 14)
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        inside &= ~keep_out
        shift = rng.uniform(0.15, 0.35, size=3) * rng.choice([-1.0, 1.0], size=3)
        img[inside] = np.clip(img[inside] + shift, 0.15, 0.85)
    return np.clip(img, 0.0, 1.0)


def _place_instance(
    spec: CorpusSpec, rng: np.random.Generator, band: tuple[float, float]
) -> tuple[np.ndarray, float, float, np.ndarray] | None:
    """Pick text, scale, rotation, and position within a horizontal band.

    Returns (quad corners, cell scale, rotation, local-to-image offset).
    """
    band_top, band_bot = band
    band_h = band_bot - band_top
    theta = np.deg2rad(rng.uniform(-spec.rotation_deg, spec.rotation_deg))
    for _ in range(8):
        cast_h = QUAD_CELLS_W * abs(np.sin(theta)) + QUAD_CELLS_H * abs(np.cos(theta))
        cast_w = QUAD_CELLS_W * abs(np.cos(theta)) + QUAD_CELLS_H * abs(np.sin(theta))
        s_max = min((band_h - 4) / cast_h, (spec.width - 8) / cast_w)
        s_lo = spec.glyph_height[0] / font.GLYPH_H
        s_hi = spec.glyph_height[1] / font.GLYPH_H
        if s_max >= s_lo:
            s = rng.uniform(s_lo, min(s_hi, s_max))
            bw, bh = cast_w * s, cast_h * s
            cx = rng.uniform(bw / 2 + 2, spec.width - bw / 2 - 2)
            cy = rng.uniform(band_top + bh / 2 + 2, band_bot - bh / 2 - 2)
            local = np.array(
                [[0.0, 0.0], [QUAD_CELLS_W, 0.0], [QUAD_CELLS_W, QUAD_CELLS_H], [0.0, QUAD_CELLS_H]]
            ) * s
            center_local = local.mean(axis=0)
            rot = _rotation(theta)
            quad = (local - center_local) @ rot.T + np.array([cx, cy])
            return quad, s, theta, np.array([cx, cy]) - center_local @ rot.T
        theta *= 0.5  # too steep for the band at the minimum scale
    return None


def _rasterize_text(
    spec: CorpusSpec,
    text: str,
    quad: np.ndarray,
    s: float,
    theta: float,
) -> np.ndarray:
    """Exact binary ink mask: nearest-cell lookup of the font raster."""
    raster = font.text_raster(text)
    margin = text_left_margin_cells(len(text))
    rot = _rotation(theta)
    inv = rot.T  # rotation inverse
    center_img = quad.mean(axis=0)
    center_local = np.array([QUAD_CELLS_W, QUAD_CELLS_H]) * s / 2.0

    x0 = max(int(np.floor(quad[:, 0].min())), 0)
    x1 = min(int(np.ceil(quad[:, 0].max())) + 1, spec.width)
    y0 = max(int(np.floor(quad[:, 1].min())), 0)
    y1 = min(int(np.ceil(quad[:, 1].max())) + 1, spec.height)

    mask = np.zeros((spec.height, spec.width), dtype=np.uint8)
    if x1 <= x0 or y1 <= y0:
        return mask
    yy, xx = np.mgrid[y0:y1, x0:x1]
    pts = np.stack([xx + 0.5 - center_img[0], yy + 0.5 - center_img[1]], axis=-1)
    local = pts @ inv.T + center_local
    cx = local[..., 0] / s - margin
    cy = local[..., 1] / s - 0.5
    ok = (cx >= 0) & (cx < raster.shape[1]) & (cy >= 0) & (cy < raster.shape[0])
    ix = np.clip(cx.astype(int), 0, raster.shape[1] - 1)
    iy = np.clip(cy.astype(int), 0, raster.shape[0] - 1)
    ink = ok & (raster[iy, ix] > 0)
    mask[y0:y1, x0:x1] = ink.astype(np.uint8)
    return mask


def render_image(spec: CorpusSpec, index: int) -> RenderedImage:
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, index)))
    image_id = f"img_{index:04d}"
    n = int(rng.integers(spec.min_instances, spec.max_instances + 1))

    band_edges = np.linspace(0, spec.height, n + 1)
    placements = []
    for k in range(n):
        placed = _place_instance(spec, rng, (band_edges[k], band_edges[k + 1]))
        if placed is None:
            raise RuntimeError(
                f"cannot place instance {k} of {image_id}; lower glyph_height or rotation_deg"
            )
        length = int(rng.integers(spec.min_text_len, spec.max_text_len + 1))
        text = "".join(rng.choice(list(font.ALPHABET), size=length))
        placements.append((placed, text))

    masks = [
        _rasterize_text(spec, text, placed[0], placed[1], placed[2])
        for placed, text in placements
    ]
    all_ink = np.zeros((spec.height, spec.width), dtype=bool)
    for m in masks:
        all_ink |= m.astype(bool)
    # keep-out ring so texture blobs never hug glyph strokes
    pad = int(np.ceil(max(p[0][1] for p in placements))) + 1
    keep_out = _dilate_bool(all_ink, pad)

    image = _background(spec, rng, keep_out)
    bg_mean = float(image.mean())

    instances = []
    for (placed, text), mask in zip(placements, masks):
        quad = placed[0]
        fg = _sample_fg_color(rng, bg_mean, spec.separation)
        image[mask.astype(bool)] = fg
        instances.append(Instance(image_id, quad, text))
    return RenderedImage(image_id, image, instances, masks)


def _dilate_bool(m: np.ndarray, radius: int) -> np.ndarray:
    from scipy import ndimage

    if radius < 1:
        return m.copy()
    return ndimage.binary_dilation(m, np.ones((2 * radius + 1, 2 * radius + 1), bool))


def generate_corpus(spec: CorpusSpec) -> list[RenderedImage]:
    return [render_image(spec, i) for i in range(spec.images)]


def spec_lines(spec: CorpusSpec) -> list[str]:
    return [f"{f.name} = {getattr(spec, f.name)}" for f in dataclasses.fields(spec)]


def write_corpus(out_dir, spec: CorpusSpec) -> list[RenderedImage]:
    """Render the corpus and emit images/, annotations/, masks/, and a
    corpus.txt echo of the generating parameters."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rendered = generate_corpus(spec)
    instances = []
    for r in rendered:
        imgio.save_image(out / "images" / f"{r.image_id}.png", r.image)
        for k, mask in enumerate(r.masks):
            imgio.save_mask(out / "masks" / f"{r.image_id}__{k:02d}.png", mask)
        instances.extend(r.instances)
    write_annotations(out, instances)
    (out / "corpus.txt").write_text("\n".join(spec_lines(spec)) + "\n", encoding="utf-8")
    return rendered

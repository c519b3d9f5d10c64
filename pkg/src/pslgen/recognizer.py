"""Recognition-model contract, the built-in template recognizer, and the
string edit-distance cost.

The built-in recognizer reads text from standardized crops using a fixed
three-layer rectified convolution stack (oriented edge filters followed by
box pooling) and normalized cross-correlation of glyph templates against
the deepest feature map. Weights are hard-coded constants; nothing is
trained. The corpus renderer lays text out on the same cell grid, so a
clean crop projects each font cell onto exactly one deep-map pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import font
from .geometry import bilinear_sample
from .raster import grayscale

# crop geometry shared with the corpus renderer: a bounding quad spans
# QUAD_CELLS_W x QUAD_CELLS_H font cells and is warped to CROP_W x CROP_H,
# so one cell maps to CELL crop pixels.
CROP_W = 128
CROP_H = 32
CELL = 4
QUAD_CELLS_W = CROP_W // CELL
QUAD_CELLS_H = CROP_H // CELL
TEXT_TOP_PX = CELL // 2  # half-cell vertical margin
MAX_TEXT_LEN = (QUAD_CELLS_W + 1) // font.ADVANCE

SCORE_THRESHOLD = 0.6
TEMPLATE_SOURCE_CELL = 2.6  # px per font cell before the simulated quad warp
_WINDOW_CELLS = font.ADVANCE


def text_left_margin_cells(n_chars: int) -> int:
    """Left margin (whole cells) that centers an n-glyph string in a quad."""
    return (QUAD_CELLS_W - (font.ADVANCE * n_chars - 1)) // 2


@dataclass(frozen=True)
class ActivationStack:
    """One layer's rectified activations plus its geometry relative to the
    previous layer (stride >= 1, square kernel)."""

    values: np.ndarray  # (channels, height, width), nonnegative
    stride: int
    kernel: int

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def channel_mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


class RecognitionModel(Protocol):
    """Adapter contract for recognition models: a deterministic map from a
    crop to (predicted text, activation layers ordered shallow to deep)."""

    def predict(self, crop: np.ndarray) -> tuple[str, list[ActivationStack]]: ...


def _conv2_same(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    """3x3 correlation with edge-replicated padding (uniform inputs give a
    uniform response, so constant crops stay activation-free)."""
    p = np.pad(a, 1, mode="edge")
    out = np.zeros_like(a)
    for dy in range(3):
        for dx in range(3):
            w = k[dy, dx]
            if w != 0.0:
                out += w * p[dy : dy + a.shape[0], dx : dx + a.shape[1]]
    return out


def _box2_stride2(a: np.ndarray) -> np.ndarray:
    return a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_SOBEL_Y = _SOBEL_X.T.copy()
_DIAG_1 = np.array([[0, 1, 2], [-1, 0, 1], [-2, -1, 0]], dtype=float)
_DIAG_2 = np.array([[2, 1, 0], [1, 0, -1], [0, -1, -2]], dtype=float)

_SCHARR_X = np.array([[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]], dtype=float) / 4.0
_SCHARR_Y = _SCHARR_X.T.copy()
_SURROUND = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=float)

_VARIANT_KERNELS = {
    "edges": (_SOBEL_X, _SOBEL_Y, _DIAG_1, _DIAG_2),
    "fine": (_SCHARR_X, _SCHARR_Y, _DIAG_1, _DIAG_2, _SURROUND),
}


class ToyGlyphRecognizer:
    """Deterministic glyph-template recognizer satisfying the
    RecognitionModel contract.

    Two fixed-weight variants ("edges", "fine") differ in their first-layer
    filter bank, which gives an ensemble genuinely diverse errors.
    """

    def __init__(self, variant: str = "edges", alphabet: str = font.ALPHABET):
        if variant not in _VARIANT_KERNELS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.alphabet = alphabet
        self._kernels = _VARIANT_KERNELS[variant]
        self._templates = self._build_templates()

    # -- forward pass -------------------------------------------------

    def _layers(self, gray: np.ndarray) -> list[ActivationStack]:
        l1 = []
        for k in self._kernels:
            r = _conv2_same(gray, k)
            l1.append(np.maximum(r, 0.0))
            l1.append(np.maximum(-r, 0.0))
        a1 = np.stack(l1)

        # pair the +/- channels of each kernel, then pool 2x2 depthwise so
        # the deepest map keeps per-orientation structure
        a2 = np.stack(
            [_box2_stride2(a1[2 * i] + a1[2 * i + 1]) for i in range(len(self._kernels))]
        )
        a3 = np.stack([_box2_stride2(c) for c in a2])
        return [
            ActivationStack(a1, stride=1, kernel=3),
            ActivationStack(a2, stride=2, kernel=2),
            ActivationStack(a3, stride=2, kernel=2),
        ]

    def _deep_map(self, gray: np.ndarray) -> np.ndarray:
        return self._layers(gray)[-1].values

    # -- templates ----------------------------------------------------

    def _glyph_tile(self, ch: str) -> np.ndarray:
        """Glyph rendered at a mid-range source scale and bilinearly
        resampled to crop resolution, matching the blur a corpus crop
        picks up from its quad warp."""
        src_cell = TEMPLATE_SOURCE_CELL
        sw = int(round(_WINDOW_CELLS * src_cell))
        sh = int(round(QUAD_CELLS_H * src_cell))
        raster = font.glyph_raster(ch)
        ys, xs = np.mgrid[0:sh, 0:sw]
        # half-cell margins on every side, matching the corpus layout
        cy = (ys + 0.5) / src_cell - 0.5
        cx = (xs + 0.5) / src_cell - 0.5
        ok = (cy >= 0) & (cy < font.GLYPH_H) & (cx >= 0) & (cx < font.GLYPH_W)
        iy = np.clip(cy.astype(int), 0, font.GLYPH_H - 1)
        ix = np.clip(cx.astype(int), 0, font.GLYPH_W - 1)
        src = np.where(ok & (raster[iy, ix] > 0), 1.0, 0.0)

        tile_w = _WINDOW_CELLS * CELL
        ys, xs = np.mgrid[0:CROP_H, 0:tile_w]
        u = (xs + 0.5) * sw / tile_w
        v = (ys + 0.5) * sh / CROP_H
        return bilinear_sample(src, u, v, fill=0.0)

    def _build_templates(self) -> tuple[np.ndarray, list[str]]:
        tiles = []
        chars = []
        for ch in self.alphabet:
            deep = self._deep_map(self._glyph_tile(ch))
            vec = deep.ravel()
            vec = vec - vec.mean()
            nrm = np.linalg.norm(vec)
            tiles.append(vec / nrm)
            chars.append(ch)
        return np.stack(tiles), chars

    # -- prediction ---------------------------------------------------

    def predict(self, crop: np.ndarray) -> tuple[str, list[ActivationStack]]:
        img = np.asarray(crop, dtype=float)
        if img.shape[:2] != (CROP_H, CROP_W):
            raise ValueError(f"crop must be {CROP_H}x{CROP_W}, got {img.shape[:2]}")
        layers = self._layers(grayscale(img))
        text = self._read(layers[-1].values)
        return text, layers

    def _read(self, deep: np.ndarray) -> str:
        """Column sweep of multi-channel NCC over the deepest feature map."""
        templates, chars = self._templates
        w = _WINDOW_CELLS
        n_pos = deep.shape[2] - w + 1
        if n_pos <= 0:
            return ""
        windows = np.stack([deep[:, :, x : x + w].ravel() for x in range(n_pos)])
        windows = windows - windows.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(windows, axis=1)
        safe = np.maximum(norms, 1e-9)
        scores = (windows / safe[:, None]) @ templates.T
        # ignore windows carrying almost no activation relative to the
        # busiest window (kills trailing-bleed false positives; an entirely
        # flat map reads as the empty string)
        gate = max(0.2 * float(norms.max()), 1e-6)
        scores[norms < gate] = 0.0

        best_idx = np.argmax(scores, axis=1)
        best_val = scores[np.arange(n_pos), best_idx]

        out = []
        x = 0
        prev_end = 0
        while x < n_pos:
            if best_val[x] < SCORE_THRESHOLD:
                x += 1
                continue
            # anchor the emission on the local score peak (one step back,
            # up to two forward, never overlapping the previous emission)
            lo = max(prev_end, x - 1)
            hi = min(n_pos - 1, x + 2)
            x_star = lo + int(np.argmax(best_val[lo : hi + 1]))
            out.append(chars[best_idx[x_star]])
            prev_end = x_star + w
            x = prev_end
        return "".join(out)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        cur = [i + 1]
        for j, cb in enumerate(b):
            cur.append(min(prev[j + 1] + 1, cur[j] + 1, prev[j] + (ca != cb)))
        prev = cur
    return prev[-1]


def recognition_cost(predicted: str, truth: str, case_insensitive: bool = True) -> int:
    """Segmentation cost of a prediction: edit distance to the task label."""
    if case_insensitive:
        return edit_distance(predicted.upper(), truth.upper())
    return edit_distance(predicted, truth)

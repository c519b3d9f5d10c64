import numpy as np
import pytest

from pslgen import font
from pslgen.recognizer import (
    CELL,
    CROP_H,
    CROP_W,
    TEXT_TOP_PX,
    ActivationStack,
    ToyGlyphRecognizer,
    text_left_margin_cells,
)


def render_clean_crop(text: str, fg=0.1, bg=0.9) -> np.ndarray:
    """Grid-aligned crop exactly as a perfect quad warp would produce it."""
    img = np.full((CROP_H, CROP_W, 3), float(bg))
    if text:
        raster = font.text_raster(text).astype(float)
        ink = np.kron(raster, np.ones((CELL, CELL)))
        x0 = text_left_margin_cells(len(text)) * CELL
        region = img[TEXT_TOP_PX : TEXT_TOP_PX + ink.shape[0], x0 : x0 + ink.shape[1], :]
        region[...] = np.where(ink[..., None] > 0, float(fg), float(bg))
    return img


class ScriptedModel:
    """Recognition stub: maps each crop (by its bytes) to a fixed text and
    returns one same-resolution activation layer from crop luminance."""

    def __init__(self, script: dict[bytes, str], default: str = ""):
        self.script = dict(script)
        self.default = default

    def predict(self, crop):
        img = np.asarray(crop, dtype=float)
        text = self.script.get(img.tobytes(), self.default)
        act = img.mean(axis=2)[None] if img.ndim == 3 else img[None]
        layers = [ActivationStack(np.maximum(act, 0.0), stride=1, kernel=3)]
        return text, layers


class ConstantModel:
    """Always answers the same string (with luminance activations)."""

    def __init__(self, text: str):
        self.text = text

    def predict(self, crop):
        img = np.asarray(crop, dtype=float)
        act = img.mean(axis=2)[None] if img.ndim == 3 else img[None]
        return self.text, [ActivationStack(np.maximum(act, 0.0), stride=1, kernel=3)]


@pytest.fixture(scope="session")
def toy_models():
    return [ToyGlyphRecognizer("edges"), ToyGlyphRecognizer("fine")]


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six-image corpus on disk for IO and CLI tests."""
    from pslgen.corpus import CorpusSpec, write_corpus

    root = tmp_path_factory.mktemp("small_corpus")
    spec = CorpusSpec(images=6, min_instances=2, max_instances=2, seed=11)
    rendered = write_corpus(root, spec)
    return root, spec, rendered

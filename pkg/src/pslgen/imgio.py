"""PNG IO helpers: color images, binary masks, and 16-bit soft maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_image(path, image: np.ndarray) -> None:
    arr = (np.clip(np.asarray(image, dtype=float), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr).save(Path(path))


def load_image(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=float)
    return arr / 255.0


def save_mask(path, mask: np.ndarray) -> None:
    arr = ((np.asarray(mask) > 0) * np.uint8(255))
    Image.fromarray(arr, mode="L").save(Path(path))


def load_mask(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 127).astype(np.uint8)


def save_soft(path, values: np.ndarray) -> None:
    """16-bit single-channel PNG of a [0, 1] soft map."""
    arr = (np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(arr).save(Path(path))


def load_soft(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im, dtype=float)
    return arr / 65535.0

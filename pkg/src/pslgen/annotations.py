"""Instance records and ICDAR-style annotation file IO.

Annotation format: one line per instance,
``x1,y1,x2,y2,x3,y3,x4,y4,transcription`` with a ``###`` transcription
marking an illegible (don't-care) region. Image ``<id>.png`` pairs with
``gt_<id>.txt``.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .errors import MalformedLine, MissingImage

ILLEGIBLE_TOKEN = "###"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclasses.dataclass
class Instance:
    image_id: str
    quad: np.ndarray  # (4, 2) corners in annotation order
    transcription: str
    illegible: bool = False

    def __post_init__(self):
        self.quad = np.asarray(self.quad, dtype=float).reshape(4, 2)
        if not self.transcription and not self.illegible:
            raise ValueError("legible instance needs a transcription")


def parse_line(line: str, path="<memory>", lineno: int = 0) -> tuple[np.ndarray, str, bool]:
    parts = line.rstrip("\n").split(",")
    if len(parts) < 9:
        raise MalformedLine(path, lineno, f"expected 8 coordinates + transcription, got {len(parts)} fields")
    try:
        coords = [float(v) for v in parts[:8]]
    except ValueError as exc:
        raise MalformedLine(path, lineno, f"bad coordinate: {exc}") from exc
    # transcriptions may themselves contain commas
    transcription = ",".join(parts[8:])
    quad = np.array(coords, dtype=float).reshape(4, 2)
    return quad, transcription, transcription == ILLEGIBLE_TOKEN


def format_line(quad: np.ndarray, transcription: str) -> str:
    q = np.asarray(quad, dtype=float).reshape(-1)
    return ",".join(f"{v:.2f}" for v in q) + f",{transcription}"


def _find_image(images_dir: Path, image_id: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        p = images_dir / f"{image_id}{suffix}"
        if p.exists():
            return p
    raise MissingImage(f"no image found for {image_id!r} under {images_dir}")


def load_annotations(root) -> list[Instance]:
    """Read every gt_<id>.txt under root (flat layout or annotations/ +
    images/ subdirectories) into Instance records, sorted by image id and
    line order."""
    root = Path(root)
    ann_dir = root / "annotations" if (root / "annotations").is_dir() else root
    img_dir = root / "images" if (root / "images").is_dir() else root

    instances: list[Instance] = []
    files = sorted(ann_dir.glob("gt_*.txt"))
    if not files:
        raise FileNotFoundError(f"no gt_*.txt annotation files under {ann_dir}")
    for path in files:
        image_id = path.stem[len("gt_") :]
        _find_image(img_dir, image_id)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                quad, transcription, illegible = parse_line(line, path, lineno)
                instances.append(
                    Instance(image_id, quad, "" if illegible else transcription, illegible)
                )
    return instances


def write_annotations(root, instances: list[Instance]) -> None:
    root = Path(root)
    ann_dir = root / "annotations"
    ann_dir.mkdir(parents=True, exist_ok=True)
    by_image: dict[str, list[Instance]] = {}
    for inst in instances:
        by_image.setdefault(inst.image_id, []).append(inst)
    for image_id, insts in by_image.items():
        lines = [
            format_line(i.quad, ILLEGIBLE_TOKEN if i.illegible else i.transcription)
            for i in insts
        ]
        (ann_dir / f"gt_{image_id}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

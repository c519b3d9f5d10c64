"""Run reports: delimited text records plus rendered figures.

Reports carry the full configuration and seed of the run and no
timestamps, so re-running a recorded configuration reproduces every
artifact byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def format_float(v: float) -> str:
    return f"{v:.6f}"


def write_report(path, header: dict, columns: list[str], rows: list[list], aggregates: dict) -> None:
    """Key-value header, one tab-separated record per row, aggregate
    key-value block."""
    lines = [f"# {k} = {v}" for k, v in header.items()]
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(str(c) for c in row))
    for k, v in aggregates.items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> tuple[dict, list[dict], dict]:
    """Inverse of write_report (values come back as strings)."""
    header: dict = {}
    rows: list[dict] = []
    aggregates: dict = {}
    columns: list[str] | None = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("# "):
            k, _, v = line[2:].partition(" = ")
            header[k] = v
        elif columns is None and "\t" in line:
            columns = line.split("\t")
        elif columns is not None and "\t" in line:
            rows.append(dict(zip(columns, line.split("\t"))))
        else:
            k, _, v = line.partition(" = ")
            aggregates[k.strip()] = v.strip()
    return header, rows, aggregates


def save_f1_histogram(path, f1s: list[float], title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(f1s, bins=np.linspace(0, 1, 21), color="#4878cf", edgecolor="white")
    ax.set_xlabel("per-instance F1")
    ax.set_ylabel("instances")
    ax.set_title(title)
    ax.axvline(float(np.mean(f1s)) if f1s else 0.0, color="#d65f5f", linestyle="--", label="mean")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_detection_figure(path, precision: float, recall: float, f1: float, title: str) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    names = ["precision", "recall", "F1"]
    vals = [precision, recall, f1]
    ax.bar(names, vals, color=["#4878cf", "#6acc65", "#d65f5f"])
    ax.set_ylim(0, 1.05)
    for i, v in enumerate(vals):
        ax.text(i, v + 0.02, f"{v:.3f}", ha="center")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_figure(path, cells: list[dict]) -> None:
    """F1 against search steps, one line per (samples, models) combination."""
    fig, ax = plt.subplots(figsize=(6, 4))
    combos = sorted({(int(c["samples"]), int(c["models"])) for c in cells})
    for samples, models in combos:
        pts = sorted(
            (int(c["steps"]), float(c["mean_f1"]))
            for c in cells
            if int(c["samples"]) == samples and int(c["models"]) == models
        )
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=f"{samples} samples, {models} model{'s' if models > 1 else ''}",
        )
    ax.set_xlabel("search steps")
    ax.set_ylabel("mean F1")
    ax.set_title("ablation: steps x samples x models")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def overlay(image: np.ndarray, mask: np.ndarray, color=(1.0, 0.15, 0.15), strength: float = 0.55) -> np.ndarray:
    """Mask tinted over the source image for human inspection."""
    img = np.asarray(image, dtype=float)
    m = (np.asarray(mask) > 0).astype(float)[..., None] * strength
    return np.clip(img * (1.0 - m) + np.asarray(color) * m, 0.0, 1.0)

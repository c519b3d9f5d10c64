"""Command-line interface: corpus synthesis, batch label generation,
evaluation, and the ablation sweep.

Configuration comes from a plain-text key=value file; every key has a
default (see CONFIG_DEFAULTS) and environment variables are never
consulted. Batch work is distributed across a configurable number of
worker processes; per-instance seeds derive from (seed, instance index),
so output is identical at any worker count.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import imgio, report
from .annotations import Instance, load_annotations
from .baselines import binarize_pyramid, grabcut_box_psl, naive_psl, pyramid_psl
from .corpus import BACKGROUND_STYLES, CorpusSpec, write_corpus
from .errors import PslgenError
from .evaluation import match_detections, pixel_metrics
from .geometry import min_area_rect
from .pipeline import PipelineConfig, generate_psl, psl_to_image_frame
from .recognizer import ToyGlyphRecognizer

METHODS = ("wesupermadd", "naive", "pyramid", "grabcut")

CONFIG_DEFAULTS: dict[str, str] = {
    "t_max": "4",  # gain-search iterations
    "n_samples": "32",  # augmented crops per evaluation
    "s1": "1.0",  # feasibility threshold on mean edit distance
    "fg_min": "16",  # minimum foreground pixels before the hard-seed retry
    "fill": "0.5,0.5,0.5",  # attention fill color
    "alpha0": "1.0",  # initial gain
    "seed": "0",  # run seed
    "morph_radius": "1",  # trimap erosion/dilation radius
    "grabcut_iters": "5",  # graph-cut refinement iterations
    "case_insensitive": "true",  # fold case before edit distance
    "models": "2",  # ensemble size (1 or 2 built-in recognizers)
    "workers": "1",  # parallel worker processes
}

_MODEL_CACHE: dict[int, list] = {}


def parse_config(path=None) -> dict[str, str]:
    values = dict(CONFIG_DEFAULTS)
    if path is None:
        return values
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise PslgenError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in values:
            raise PslgenError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _parse_bool(v: str) -> bool:
    return v.lower() in ("1", "true", "yes", "on")


def build_pipeline_config(values: dict[str, str]) -> PipelineConfig:
    fill = tuple(float(x) for x in values["fill"].split(","))
    if len(fill) != 3:
        raise PslgenError("fill must be three comma-separated channel values")
    return PipelineConfig(
        t_max=int(values["t_max"]),
        n_samples=int(values["n_samples"]),
        s1=float(values["s1"]),
        fg_min=int(values["fg_min"]),
        fill=fill,
        alpha0=float(values["alpha0"]),
        seed=int(values["seed"]),
        morph_radius=int(values["morph_radius"]),
        grabcut_iters=int(values["grabcut_iters"]),
        case_insensitive=_parse_bool(values["case_insensitive"]),
    )


def get_models(n: int) -> list:
    if n not in _MODEL_CACHE:
        variants = ("edges", "fine")
        if not 1 <= n <= len(variants):
            raise PslgenError(f"models must be between 1 and {len(variants)}")
        _MODEL_CACHE[n] = [ToyGlyphRecognizer(v) for v in variants[:n]]
    return _MODEL_CACHE[n]


def instance_key(inst: Instance, index_within_image: int) -> str:
    return f"{inst.image_id}__{index_within_image:02d}"


def _instance_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((base_seed, index)).generate_state(1)[0])


def _image_path(root: Path, image_id: str) -> Path:
    img_dir = root / "images" if (root / "images").is_dir() else root
    for suffix in (".png", ".jpg", ".jpeg", ".bmp"):
        p = img_dir / f"{image_id}{suffix}"
        if p.exists():
            return p
    raise PslgenError(f"missing image for {image_id!r}")


# ---------------------------------------------------------------------------
# generation jobs (module level so worker processes can run them)


def _run_instance(job: dict) -> dict:
    """Generate one instance's mask; returns a report record. Failures are
    recorded, not raised."""
    key = job["key"]
    record = {"instance": key, "alpha_star": "", "flags": []}
    try:
        image = imgio.load_image(job["image_path"])
        quad = np.asarray(job["quad"])
        method = job["method"]
        soft = None
        if method == "naive":
            mask = naive_psl(quad, image.shape[1], image.shape[0])
        elif method == "pyramid":
            soft = pyramid_psl(quad, image.shape[1], image.shape[0])
            mask = binarize_pyramid(soft)
        elif method == "grabcut":
            mask, flags = grabcut_box_psl(image, quad, seed=job["seed"])
            record["flags"].extend(flags)
        elif method == "wesupermadd":
            cfg_values = dict(job["cfg_values"])
            cfg_values["seed"] = str(job["seed"])
            cfg = build_pipeline_config(cfg_values)
            models = get_models(job["models"])
            result = generate_psl(image, quad, job["text"], models, cfg)
            record["alpha_star"] = report.format_float(result.alpha_star)
            record["flags"].extend(result.flags)
            mask = psl_to_image_frame(result, image.shape[:2])
        else:
            raise PslgenError(f"unknown method {job['method']!r}")
    except PslgenError as exc:
        record["flags"].append(f"error:{type(exc).__name__}")
        record["mask_px"] = 0
        if job.get("out_dir"):
            imgio.save_mask(Path(job["out_dir"]) / "masks" / f"{key}.png", np.zeros(job["image_shape"], np.uint8))
        return record

    record["mask_px"] = int(mask.sum())
    if job.get("out_dir"):
        out = Path(job["out_dir"])
        imgio.save_mask(out / "masks" / f"{key}.png", mask)
        if soft is not None:
            imgio.save_soft(out / "soft" / f"{key}.png", soft)
        if job.get("overlays"):
            imgio.save_image(out / "overlays" / f"{key}.png", report.overlay(image, mask))
    else:
        record["mask"] = mask
    return record


def _run_jobs(jobs: list[dict], workers: int) -> list[dict]:
    if workers <= 1:
        return [_run_instance(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_instance, jobs, chunksize=1))


def _build_jobs(
    data_root: Path,
    instances: list[Instance],
    method: str,
    cfg_values: dict[str, str],
    out_dir=None,
    overlays: bool = False,
) -> list[dict]:
    jobs = []
    per_image_counter: dict[str, int] = {}
    base_seed = int(cfg_values["seed"])
    for index, inst in enumerate(instances):
        k = per_image_counter.get(inst.image_id, 0)
        per_image_counter[inst.image_id] = k + 1
        if inst.illegible:
            continue
        image_path = _image_path(data_root, inst.image_id)
        jobs.append(
            {
                "key": instance_key(inst, k),
                "image_path": str(image_path),
                "image_shape": _image_shape(image_path),
                "quad": inst.quad.tolist(),
                "text": inst.transcription,
                "method": method,
                "cfg_values": cfg_values,
                "models": int(cfg_values["models"]),
                "seed": _instance_seed(base_seed, index),
                "out_dir": str(out_dir) if out_dir else None,
                "overlays": overlays,
            }
        )
    return jobs


def _image_shape(path) -> tuple[int, int]:
    from PIL import Image

    with Image.open(path) as im:
        return im.height, im.width


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    lo, hi = args.instances
    tlo, thi = args.text_len
    spec = CorpusSpec(
        images=args.images,
        width=args.width,
        height=args.height,
        min_instances=lo,
        max_instances=hi,
        min_text_len=tlo,
        max_text_len=thi,
        glyph_height=tuple(args.glyph_height),
        rotation_deg=args.rotation,
        background=args.background,
        separation=args.separation,
        seed=args.seed,
    )
    rendered = write_corpus(args.out, spec)
    n_instances = sum(len(r.instances) for r in rendered)
    print(f"wrote {len(rendered)} images / {n_instances} instances to {args.out}")
    return 0


def cmd_generate(args) -> int:
    cfg_values = parse_config(args.config)
    if args.seed is not None:
        cfg_values["seed"] = str(args.seed)
    if args.workers is not None:
        cfg_values["workers"] = str(args.workers)
    data_root = Path(args.data)
    out = Path(args.out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    if args.method == "pyramid":
        (out / "soft").mkdir(exist_ok=True)
    if args.overlays:
        (out / "overlays").mkdir(exist_ok=True)

    instances = load_annotations(data_root)
    if args.method == "wesupermadd":
        get_models(int(cfg_values["models"]))  # build before fork so workers share
    jobs = _build_jobs(data_root, instances, args.method, cfg_values, out, args.overlays)
    records = _run_jobs(jobs, int(cfg_values["workers"]))
    records.sort(key=lambda r: r["instance"])

    header = {"command": "generate", "method": args.method, "data": data_root.name}
    # workers is execution machinery: output is identical at any count, and
    # the report must be too
    header.update({k: cfg_values[k] for k in sorted(cfg_values) if k != "workers"})
    rows = [
        [r["instance"], r["mask_px"], r["alpha_star"] or "-", "|".join(r["flags"]) or "-"]
        for r in records
    ]
    flagged = sum(1 for r in records if r["flags"])
    report.write_report(
        out / "generation_report.txt",
        header,
        ["instance", "mask_px", "alpha_star", "flags"],
        rows,
        {"instances": len(records), "flagged": flagged},
    )
    print(f"generated {len(records)} masks ({flagged} flagged) -> {out}")
    return 0


def _pair_masks(pred_dir: Path, gt_dir: Path) -> list[tuple[str, Path, Path]]:
    pred_dir = pred_dir / "masks" if (pred_dir / "masks").is_dir() else pred_dir
    gt_dir = gt_dir / "masks" if (gt_dir / "masks").is_dir() else gt_dir
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    if not preds or not gts or set(preds) != set(gts):
        only_pred = sorted(set(preds) - set(gts))[:3]
        only_gt = sorted(set(gts) - set(preds))[:3]
        raise PslgenError(
            f"prediction/ground-truth mismatch under {pred_dir} vs {gt_dir} "
            f"(pred-only: {only_pred}, gt-only: {only_gt})"
        )
    return [(k, preds[k], gts[k]) for k in sorted(preds)]


def _generation_run_info(pred_root: Path) -> tuple[dict, dict]:
    """Config echo and per-instance flags from the prediction run's own
    report, when present."""
    path = pred_root / "generation_report.txt"
    if not path.exists():
        return {}, {}
    header, rows, _ = report.read_report(path)
    echo = {f"run_{k}": v for k, v in header.items() if k != "command"}
    flags = {r["instance"]: r.get("flags", "-") for r in rows}
    return echo, flags


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "pixel":
        pairs = _pair_masks(Path(args.pred), Path(args.gt))
        run_echo, run_flags = _generation_run_info(Path(args.pred))
        rows = []
        ps, rs, f1s = [], [], []
        tp = fp = fn = 0
        for key, pred_path, gt_path in pairs:
            m = pixel_metrics(imgio.load_mask(pred_path), imgio.load_mask(gt_path))
            rows.append(
                [key] + [report.format_float(v) for v in (m.precision, m.recall, m.f1)]
                + [m.tp, m.fp, m.fn, run_flags.get(key, "-")]
            )
            ps.append(m.precision)
            rs.append(m.recall)
            f1s.append(m.f1)
            tp += m.tp
            fp += m.fp
            fn += m.fn
        micro_p = tp / (tp + fp) if tp + fp else 0.0
        micro_r = tp / (tp + fn) if tp + fn else 0.0
        aggregates = {
            "instances": len(rows),
            "macro_precision": report.format_float(float(np.mean(ps))),
            "macro_recall": report.format_float(float(np.mean(rs))),
            "macro_f1": report.format_float(float(np.mean(f1s))),
            "micro_precision": report.format_float(micro_p),
            "micro_recall": report.format_float(micro_r),
            "micro_f1": report.format_float(
                2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
            ),
        }
        header = {"command": "evaluate", "mode": "pixel", "pred": str(args.pred), "gt": str(args.gt)}
        header.update(run_echo)
        report.write_report(
            out / "metrics.txt",
            header,
            ["instance", "precision", "recall", "f1", "tp", "fp", "fn", "flags"],
            rows,
            aggregates,
        )
        report.save_f1_histogram(out / "metrics.png", f1s, f"pixel F1 ({Path(args.pred).name})")
        print(f"pixel metrics over {len(rows)} instances: macro F1 = {aggregates['macro_f1']}")
        return 0

    # detection mode: predicted quads come from the minimum rotated
    # rectangle of each predicted mask
    pred_dir = Path(args.pred)
    pred_dir = pred_dir / "masks" if (pred_dir / "masks").is_dir() else pred_dir
    instances = load_annotations(Path(args.gt))
    by_image: dict[str, list[Instance]] = {}
    for inst in instances:
        by_image.setdefault(inst.image_id, []).append(inst)

    rows = []
    tp = fp = fn = 0
    dc_total = 0
    for image_id in sorted(by_image):
        gts = [i.quad for i in by_image[image_id]]
        dont_care = [i.illegible for i in by_image[image_id]]
        preds = []
        for p in sorted(pred_dir.glob(f"{image_id}__*.png")):
            mask = imgio.load_mask(p)
            if mask.any():
                preds.append(min_area_rect(mask))
        rep = match_detections(preds, gts, dont_care, thr=args.iou_thr)
        rows.append([image_id, rep.tp, rep.fp, rep.fn, rep.dont_care, rep.ignored_preds])
        tp += rep.tp
        fp += rep.fp
        fn += rep.fn
        dc_total += rep.dont_care
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    aggregates = {
        "images": len(rows),
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "dont_care": dc_total,
        "precision": report.format_float(prec),
        "recall": report.format_float(rec),
        "f1": report.format_float(f1),
    }
    header = {
        "command": "evaluate",
        "mode": "detect",
        "pred": str(args.pred),
        "gt": str(args.gt),
        "iou_thr": str(args.iou_thr),
    }
    report.write_report(
        out / "metrics.txt",
        header,
        ["image", "tp", "fp", "fn", "dont_care", "ignored_preds"],
        rows,
        aggregates,
    )
    report.save_detection_figure(out / "metrics.png", prec, rec, f1, "detection metrics")
    print(f"detection over {len(rows)} images: F1 = {aggregates['f1']}")
    return 0


def _parse_grid(path) -> dict[str, list[int]]:
    grid = {"samples": [1, 2, 32], "models": [1, 2], "steps": [1, 2, 4]}
    if path is None:
        return grid
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in grid:
            raise PslgenError(f"{path}:{lineno}: unknown grid axis {key!r}")
        grid[key] = [int(v) for v in value.split(",")]
    return grid


def cmd_ablate(args) -> int:
    cfg_values = parse_config(args.config)
    if args.seed is not None:
        cfg_values["seed"] = str(args.seed)
    if args.workers is not None:
        cfg_values["workers"] = str(args.workers)
    grid = _parse_grid(args.grid)
    data_root = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    instances = load_annotations(data_root)
    gt_dir = data_root / "masks" if (data_root / "masks").is_dir() else data_root
    get_models(max(grid["models"]))

    cells = []
    for samples in grid["samples"]:
        for models in grid["models"]:
            for steps in grid["steps"]:
                cell_values = dict(cfg_values)
                cell_values["n_samples"] = str(samples)
                cell_values["models"] = str(models)
                cell_values["t_max"] = str(steps)
                jobs = _build_jobs(data_root, instances, "wesupermadd", cell_values)
                records = _run_jobs(jobs, int(cfg_values["workers"]))
                f1s = []
                for rec in sorted(records, key=lambda r: r["instance"]):
                    gt = imgio.load_mask(gt_dir / f"{rec['instance']}.png")
                    f1s.append(pixel_metrics(rec["mask"], gt).f1)
                cells.append(
                    {
                        "samples": samples,
                        "models": models,
                        "steps": steps,
                        "mean_f1": report.format_float(float(np.mean(f1s))),
                    }
                )
                print(
                    f"samples={samples} models={models} steps={steps}: "
                    f"mean F1 = {cells[-1]['mean_f1']}"
                )

    header = {"command": "ablate", "data": data_root.name}
    header.update({k: cfg_values[k] for k in sorted(cfg_values) if k != "workers"})
    rows = [[c["samples"], c["models"], c["steps"], c["mean_f1"]] for c in cells]
    report.write_report(
        out / "ablation.txt", header, ["samples", "models", "steps", "mean_f1"], rows, {}
    )
    report.save_ablation_figure(out / "ablation.png", cells)
    print(f"ablation table -> {out / 'ablation.txt'}")
    return 0


# ---------------------------------------------------------------------------


def _range_pair(text: str) -> tuple[int, int]:
    parts = text.split("-") if "-" in text else text.split(",")
    if len(parts) == 1:
        v = int(parts[0])
        return v, v
    return int(parts[0]), int(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pslgen",
        description="Pseudo segmentation labels for quad-annotated text instances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic corpus with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=50)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--instances", type=_range_pair, default=(1, 4), help="per-image range, e.g. 1-4")
    p.add_argument("--text-len", type=_range_pair, default=(1, 5))
    p.add_argument("--glyph-height", type=float, nargs=2, default=(14.0, 24.0))
    p.add_argument("--rotation", type=float, default=15.0)
    p.add_argument("--background", choices=BACKGROUND_STYLES, default="noise-texture")
    p.add_argument("--separation", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("generate", help="generate pseudo labels for a dataset")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--data", required=True, help="dataset root (images/ + annotations/)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--workers", type=int, default=None, help="override config workers")
    p.add_argument("--overlays", action="store_true", help="emit tinted inspection images")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=("pixel", "detect"), default="pixel")
    p.add_argument("--iou-thr", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="sweep samples x models x steps")
    p.add_argument("--grid", default=None, help="key=value grid file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PslgenError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""Pixel metrics, quadrilateral IoU, detection matching, and mask-driven
proposal refinement."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import DegenerateQuad
from .geometry import (
    canonical_quad,
    min_area_rect,
    min_area_rect_points,
    project_points,
    quad_area,
    rect_corners,
    solve_homography,
    validate_quad,
    warp_crop,
)
from .raster import resize_nearest

PRP_EDGE_PIXELS = 3
PRP_MAX_ITERS = 10


@dataclasses.dataclass
class PixelMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclasses.dataclass
class DetectionReport:
    matches: list[tuple[int, int, float]]  # (pred index, gt index, IoU)
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    dont_care: int
    ignored_preds: int


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def pixel_metrics(pred: np.ndarray, gt: np.ndarray) -> PixelMetrics:
    """Foreground-class precision/recall/F1. Predictions at a different
    resolution are nearest-neighbor resized to the ground-truth grid; zero
    denominators yield zero scores."""
    p = (np.asarray(pred) > 0)
    g = (np.asarray(gt) > 0)
    if p.shape != g.shape:
        p = resize_nearest(p.astype(np.uint8), g.shape[0], g.shape[1]).astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    return PixelMetrics(prec, rec, _f1(prec, rec), tp, fp, fn)


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of a polygon against a convex clip quad."""
    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-12

    def intersect(p, q, a, b):
        d1 = np.asarray(q) - p
        d2 = np.asarray(b) - a
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-30:
            return q
        t = ((a[0] - p[0]) * d2[1] - (a[1] - p[1]) * d2[0]) / denom
        return p + t * d1

    output = list(np.asarray(subject, dtype=float))
    clip = np.asarray(clip, dtype=float)
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        if not output:
            break
        src = output
        output = []
        for j, p in enumerate(src):
            q = src[(j + 1) % len(src)]
            if inside(q, a, b):
                if not inside(p, a, b):
                    output.append(intersect(p, q, a, b))
                output.append(q)
            elif inside(p, a, b):
                output.append(intersect(p, q, a, b))
    return np.asarray(output) if output else np.zeros((0, 2))


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def quad_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Exact intersection-over-union of two convex quads via polygon
    clipping."""
    qa = canonical_quad(a)
    qb = canonical_quad(b)
    inter = _polygon_area(_clip_polygon(qa, qb))
    union = quad_area(qa) + quad_area(qb) - inter
    if union <= 0:
        raise DegenerateQuad("degenerate union")
    return float(min(max(inter / union, 0.0), 1.0))


def match_detections(
    preds: list[np.ndarray],
    gts: list[np.ndarray],
    dont_care: list[bool],
    thr: float = 0.5,
) -> DetectionReport:
    """Greedy one-to-one matching in descending-IoU order (ties broken by
    lowest pred then gt index). Predictions whose only above-threshold
    overlap is with a don't-care region are excluded from the counts."""
    if len(dont_care) != len(gts):
        raise ValueError("dont_care must parallel gts")
    care_idx = [i for i, dc in enumerate(dont_care) if not dc]
    ignore_idx = [i for i, dc in enumerate(dont_care) if dc]

    pairs = []
    for pi, p in enumerate(preds):
        for gi in care_idx:
            iou = quad_iou(p, gts[gi])
            if iou > thr:
                pairs.append((-iou, pi, gi))
    pairs.sort()

    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    matches = []
    for neg_iou, pi, gi in pairs:
        if pi in matched_pred or gi in matched_gt:
            continue
        matched_pred.add(pi)
        matched_gt.add(gi)
        matches.append((pi, gi, -neg_iou))

    ignored = 0
    fp = 0
    for pi, p in enumerate(preds):
        if pi in matched_pred:
            continue
        hits_dc = any(quad_iou(p, gts[gi]) > thr for gi in ignore_idx)
        if hits_dc:
            ignored += 1
        else:
            fp += 1

    tp = len(matches)
    fn = len(care_idx) - tp
    counted_preds = len(preds) - ignored
    prec = tp / counted_preds if counted_preds > 0 else 0.0
    rec = tp / len(care_idx) if care_idx else 0.0
    return DetectionReport(
        matches, tp, fp, fn, prec, rec, _f1(prec, rec), len(ignore_idx), ignored
    )


def _rect_frame(rect: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Homography mapping an axis-aligned crop onto the rotated rect, plus
    the crop size implied by the rect's side lengths."""
    q = np.asarray(rect, dtype=float)
    w = max(int(round(np.linalg.norm(q[1] - q[0]))), 8)
    h = max(int(round(np.linalg.norm(q[3] - q[0]))), 8)
    return solve_homography(rect_corners(w, h), q), w, h


def prp_refine(
    image: np.ndarray,
    proposal: np.ndarray,
    segment,
    n: int = PRP_EDGE_PIXELS,
    max_iters: int = PRP_MAX_ITERS,
) -> np.ndarray:
    """Grow a proposal's edges outward while enough segmented foreground
    touches them, then return the minimum rotated rectangle of the final
    segmentation (in image coordinates). An empty segmentation returns
    the proposal unchanged."""
    if n < 1 or max_iters < 0:
        raise ValueError("n >= 1 and max_iters >= 0 required")
    proposal = validate_quad(proposal)
    # clockwise rect keeps edge i <-> crop border i and outward normals honest
    rect = canonical_quad(min_area_rect_points(proposal))

    def segment_rect(r):
        h_map, w, h = _rect_frame(r)
        crop = warp_crop(np.asarray(image, dtype=float), h_map, w, h)
        return np.asarray(segment(crop)) > 0, h_map

    mask, h_map = segment_rect(rect)
    if not mask.any():
        return proposal

    for _ in range(max_iters):
        grown = False
        # edge i runs from rect corner i to corner i+1; its crop-frame
        # counterpart is the matching border row/column of the mask
        edges = {
            0: mask[0, :],
            1: mask[:, -1],
            2: mask[-1, :],
            3: mask[:, 0],
        }
        new_rect = rect.copy()
        for i in range(4):
            if int(edges[i].sum()) >= n:
                a = rect[i]
                b = rect[(i + 1) % 4]
                edge = b - a
                normal = np.array([edge[1], -edge[0]])  # outward for CW corners
                norm = np.linalg.norm(normal)
                if norm < 1e-12:
                    continue
                step = normal / norm
                new_rect[i] = new_rect[i] + step
                new_rect[(i + 1) % 4] = new_rect[(i + 1) % 4] + step
                grown = True
        if not grown:
            break
        rect = new_rect
        mask, h_map = segment_rect(rect)
        if not mask.any():
            return proposal

    rows, cols = np.nonzero(mask)
    pts = np.column_stack([cols + 0.5, rows + 0.5])
    image_pts = project_points(h_map, pts)
    return min_area_rect_points(image_pts)

"""Quadrilaterals, homographies, perspective warps, and rotated rectangles.

Conventions used throughout the package:
  * quads are (4, 2) float arrays, canonicalized clockwise (in image
    coordinates, y down) starting from the corner nearest the first
    annotated point;
  * pixel centers sit at integer coordinates + 0.5 for all area and
    containment math;
  * a homography passed to a warp maps *output* coordinates into *source*
    coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateQuad, EmptyMask, PointAtInfinity, SingularSystem

MIN_QUAD_AREA = 1e-6


@dataclass(frozen=True)
class PriorBox:
    """Axis-aligned anchor box with per-side length variances."""

    center: tuple[float, float]
    size: tuple[float, float]
    variances: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError("prior box sides must be positive")
        if self.variances[0] <= 0 or self.variances[1] <= 0:
            raise ValueError("prior box variances must be positive")


def quad_area(quad: np.ndarray) -> float:
    """Unsigned shoelace area of a 4-corner polygon."""
    q = np.asarray(quad, dtype=float)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _signed_area(quad: np.ndarray) -> float:
    x, y = quad[:, 0], quad[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _segments_cross(p1, p2, p3, p4) -> bool:
    """Proper intersection test for open segments p1p2 and p3p4."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple_quad(quad: np.ndarray) -> bool:
    """True when neither pair of opposite edges crosses."""
    q = np.asarray(quad, dtype=float)
    return not (
        _segments_cross(q[0], q[1], q[2], q[3])
        or _segments_cross(q[1], q[2], q[3], q[0])
    )


def validate_quad(quad: np.ndarray, min_area: float = MIN_QUAD_AREA) -> np.ndarray:
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    if not np.all(np.isfinite(q)):
        raise DegenerateQuad("quad has non-finite corners")
    if quad_area(q) <= min_area:
        raise DegenerateQuad(f"quad area {quad_area(q):g} <= {min_area:g}")
    if not is_simple_quad(q):
        raise DegenerateQuad("quad is self-intersecting")
    return q


def canonical_quad(corners: np.ndarray) -> np.ndarray:
    """Clockwise corner order (y-down frame), starting nearest the first
    annotated corner. Raises DegenerateQuad on invalid input."""
    q = validate_quad(corners)
    first = q[0].copy()
    # y-down clockwise traversal has positive shoelace sum
    if _signed_area(q) < 0:
        q = q[::-1]
    start = int(np.argmin(np.sum((q - first) ** 2, axis=1)))
    return np.roll(q, -start, axis=0)


def rect_corners(w: float, h: float) -> np.ndarray:
    """Clockwise corners of the axis-aligned rectangle [0,w]x[0,h]."""
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


# ---------------------------------------------------------------------------
# homography estimation and application


def solve_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective transform mapping the 4 src corners onto the dst
    corners, solved as the 8-unknown linear system after similarity
    normalization of both corner sets (for conditioning)."""
    s = validate_quad(src)
    d = validate_quad(dst)

    def normalizer(pts):
        c = pts.mean(axis=0)
        rms = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
        scale = np.sqrt(2.0) / max(rms, 1e-12)
        t = np.array(
            [[scale, 0.0, -scale * c[0]], [0.0, scale, -scale * c[1]], [0.0, 0.0, 1.0]]
        )
        return t

    ts, td = normalizer(s), normalizer(d)
    sn = (ts @ np.column_stack([s, np.ones(4)]).T).T[:, :2]
    dn = (td @ np.column_stack([d, np.ones(4)]).T).T[:, :2]

    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = sn[i]
        u, v = dn[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v

    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("homography solve produced non-finite entries")

    hn = np.append(sol, 1.0).reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(np.linalg.det(h)) <= 1e-12:
        raise SingularSystem("homography is singular")
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return h


def invert_homography(h: np.ndarray) -> np.ndarray:
    hi = np.linalg.inv(h)
    if abs(hi[2, 2]) > 1e-12:
        hi = hi / hi[2, 2]
    return hi


def project_point(h: np.ndarray, p) -> np.ndarray:
    """Apply h to a single (x, y) point with projective division."""
    x, y = float(p[0]), float(p[1])
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if abs(w) <= 1e-12:
        raise PointAtInfinity(f"denominator {w:g} underflows at ({x:g}, {y:g})")
    return np.array(
        [
            (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w,
            (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w,
        ]
    )


def project_points(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorized projective transform of an (N, 2) point array."""
    p = np.asarray(pts, dtype=float)
    w = h[2, 0] * p[:, 0] + h[2, 1] * p[:, 1] + h[2, 2]
    if np.any(np.abs(w) <= 1e-12):
        raise PointAtInfinity("some points map to infinity")
    out = np.empty_like(p)
    out[:, 0] = (h[0, 0] * p[:, 0] + h[0, 1] * p[:, 1] + h[0, 2]) / w
    out[:, 1] = (h[1, 0] * p[:, 0] + h[1, 1] * p[:, 1] + h[1, 2]) / w
    return out


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill) -> np.ndarray:
    """Sample image at continuous pixel-center coordinates.

    (x, y) = (col + 0.5, row + 0.5) hits pixel (row, col) exactly; taps
    outside the image read the fill value.
    """
    hgt, wid = image.shape[:2]
    u = xs - 0.5
    v = ys - 0.5
    i0 = np.floor(u).astype(int)
    j0 = np.floor(v).astype(int)
    fu = u - i0
    fv = v - j0

    channels = 1 if image.ndim == 2 else image.shape[2]
    flat = image.reshape(hgt, wid, channels).astype(float)
    fill_vec = np.broadcast_to(np.asarray(fill, dtype=float).reshape(-1), (channels,))

    out = np.zeros(xs.shape + (channels,), dtype=float)
    for di, dj, wgt in (
        (0, 0, (1 - fu) * (1 - fv)),
        (1, 0, fu * (1 - fv)),
        (0, 1, (1 - fu) * fv),
        (1, 1, fu * fv),
    ):
        ii = i0 + di
        jj = j0 + dj
        valid = (ii >= 0) & (ii < wid) & (jj >= 0) & (jj < hgt)
        tap = np.where(
            valid[..., None],
            flat[np.clip(jj, 0, hgt - 1), np.clip(ii, 0, wid - 1)],
            fill_vec,
        )
        out += wgt[..., None] * tap
    if image.ndim == 2:
        return out[..., 0]
    return out


def warp_image(image: np.ndarray, h: np.ndarray, out_w: int, out_h: int, fill) -> np.ndarray:
    """Bilinear warp where h maps output pixel centers to source coords."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be positive")
    cols, rows = np.meshgrid(np.arange(out_w), np.arange(out_h))
    centers = np.column_stack([(cols.ravel() + 0.5), (rows.ravel() + 0.5)])
    src = project_points(h, centers)
    xs = src[:, 0].reshape(out_h, out_w)
    ys = src[:, 1].reshape(out_h, out_w)
    return bilinear_sample(image, xs, ys, fill)


def warp_crop(image: np.ndarray, h: np.ndarray, out_w: int, out_h: int, fill=(0.5, 0.5, 0.5)) -> np.ndarray:
    """Color crop warp; out size must be at least 8x8 (recognizer floor)."""
    if out_w < 8 or out_h < 8:
        raise ValueError("crop size must be at least 8x8")
    return warp_image(image, h, out_w, out_h, fill)


def crop_homography(quad: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Homography mapping crop coordinates back onto the source quad."""
    q = canonical_quad(quad)
    return solve_homography(rect_corners(out_w, out_h), q)


# ---------------------------------------------------------------------------
# containment and rotated rectangles


def points_in_quad(points: np.ndarray, quad: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """Boundary-inclusive containment test for an (N, 2) point array."""
    q = validate_quad(quad)
    p = np.asarray(points, dtype=float)
    inside = np.zeros(len(p), dtype=bool)
    on_edge = np.zeros(len(p), dtype=bool)
    for i in range(4):
        x1, y1 = q[i]
        x2, y2 = q[(i + 1) % 4]
        # even-odd ray cast (horizontal ray toward +x)
        crosses = (y1 > p[:, 1]) != (y2 > p[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (p[:, 1] - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (p[:, 0] < np.where(crosses, xint, np.inf))
        # distance to the closed segment
        ex, ey = x2 - x1, y2 - y1
        ll = ex * ex + ey * ey
        t = np.clip(((p[:, 0] - x1) * ex + (p[:, 1] - y1) * ey) / max(ll, 1e-30), 0.0, 1.0)
        d2 = (p[:, 0] - (x1 + t * ex)) ** 2 + (p[:, 1] - (y1 + t * ey)) ** 2
        on_edge |= d2 <= eps * eps + 4 * np.finfo(float).eps
    return inside | on_edge


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull in counter-clockwise order; handles collinear sets."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    return hull if len(hull) >= 1 else pts


def min_area_rect_points(points: np.ndarray) -> np.ndarray:
    """Minimum-area rotated rectangle covering a point set (rotating
    calipers over the convex hull). Degenerates gracefully to a segment or
    a single point."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        raise EmptyMask("no points to bound")
    hull = convex_hull(pts)
    if len(hull) == 1:
        return np.tile(hull[0], (4, 1))
    if len(hull) == 2:
        a, b = hull
        return np.array([a, b, b, a])

    best = None
    edges = np.roll(hull, -1, axis=0) - hull
    for e in edges:
        norm = np.hypot(e[0], e[1])
        if norm < 1e-12:
            continue
        c, s = e[0] / norm, e[1] / norm
        rot = np.array([[c, s], [-s, c]])
        r = hull @ rot.T
        x0, x1 = r[:, 0].min(), r[:, 0].max()
        y0, y1 = r[:, 1].min(), r[:, 1].max()
        area = (x1 - x0) * (y1 - y0)
        if best is None or area < best[0]:
            corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]) @ rot
            best = (area, corners)
    return best[1]


def min_area_rect(mask: np.ndarray) -> np.ndarray:
    """Minimum rotated rectangle around a binary mask's foreground pixel
    centers."""
    m = np.asarray(mask)
    rows, cols = np.nonzero(m)
    if len(rows) == 0:
        raise EmptyMask("mask has no foreground")
    centers = np.column_stack([cols + 0.5, rows + 0.5])
    return min_area_rect_points(centers)


def encode_target_quad(quad: np.ndarray, box: PriorBox) -> np.ndarray:
    """Normalize quad corners against a matched prior box: each coordinate
    becomes (g - center) / (side * variance)."""
    q = np.asarray(quad, dtype=float).reshape(4, 2)
    out = np.empty_like(q)
    out[:, 0] = (q[:, 0] - box.center[0]) / (box.size[0] * box.variances[0])
    out[:, 1] = (q[:, 1] - box.center[1]) / (box.size[1] * box.variances[1])
    return out

"""Iterated graph-cut segmentation under trimap constraints.

The pieces: hard-assignment GMM color models (k-means++ seeding, full
covariances), an s-t max-flow/min-cut wrapper, and the refinement loop
that alternates GMM fits with min cuts. Capacities are quantized to
integers before the cut, and the per-iteration energy bookkeeping uses
the same integers, so the post-cut energy is exactly the optimum of the
problem the solver saw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .errors import EmptyInput
from .raster import as_mask, check_same_shape

# trimap labels, in cut-precedence order
BG, PBG, PFG, FG = 0, 1, 2, 3

LAMBDA = 50.0
GMM_COMPONENTS = 5
GMM_MAX_ROUNDS = 20
COV_REG = 1e-5
HARD_CAPACITY = 1e9
CAPACITY_SCALE = 128  # quantization: int capacity = round(cap * scale)
_INT_CAP_MAX = 2**31 - 1  # solver breaks silently past int32
_MIN_LIKELIHOOD = 1e-9


# ---------------------------------------------------------------------------
# GMM color model


@dataclass
class Gmm:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 3)
    covs: np.ndarray  # (K, 3, 3), regularized SPD

    _inv: np.ndarray = field(init=False, repr=False)
    _lognorm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._inv = np.linalg.inv(self.covs)
        _, logdets = np.linalg.slogdet(self.covs)
        self._lognorm = -0.5 * (3 * np.log(2 * np.pi) + logdets)

    @property
    def components(self) -> int:
        return len(self.weights)

    def log_likelihood(self, pixels: np.ndarray) -> np.ndarray:
        """Per-pixel log density of the mixture."""
        x = np.asarray(pixels, dtype=float).reshape(-1, 3)
        logp = np.empty((len(x), self.components))
        for k in range(self.components):
            d = x - self.means[k]
            maha = np.einsum("ij,jk,ik->i", d, self._inv[k], d)
            logp[:, k] = np.log(self.weights[k]) + self._lognorm[k] - 0.5 * maha
        peak = logp.max(axis=1)
        return peak + np.log(np.exp(logp - peak[:, None]).sum(axis=1))


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 1e-30:
            centers.append(x[rng.integers(len(x))])
            continue
        idx = rng.choice(len(x), p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm(pixels: np.ndarray, k: int = GMM_COMPONENTS, seed: int = 0) -> Gmm:
    """Hard-assignment mixture fit: k-means++ init, at most GMM_MAX_ROUNDS
    Lloyd rounds (stops when assignments settle), component statistics from
    the final clusters. Empty components are dropped."""
    x = np.asarray(pixels, dtype=float).reshape(-1, 3)
    if len(x) == 0:
        raise EmptyInput("no pixels to model")
    k = max(1, min(k, len(x)))
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)

    labels = None
    for _ in range(GMM_MAX_ROUNDS):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            sel = labels == c
            if np.any(sel):
                centers[c] = x[sel].mean(axis=0)

    weights, means, covs = [], [], []
    for c in range(k):
        sel = labels == c
        n = int(sel.sum())
        if n == 0:
            continue
        xc = x[sel]
        mu = xc.mean(axis=0)
        cov = (xc - mu).T @ (xc - mu) / n + COV_REG * np.eye(3)
        weights.append(n / len(x))
        means.append(mu)
        covs.append(cov)
    return Gmm(np.array(weights), np.array(means), np.array(covs))


# ---------------------------------------------------------------------------
# max flow / min cut


@dataclass
class FlowGraph:
    """Directed graph with nonnegative real capacities."""

    n_nodes: int
    edges: list[tuple[int, int, float]]
    source: int
    sink: int

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")


def _quantize(cap: np.ndarray) -> np.ndarray:
    q = np.rint(np.asarray(cap, dtype=float) * CAPACITY_SCALE)
    return np.minimum(q, _INT_CAP_MAX).astype(np.int64)


def max_flow(graph: FlowGraph) -> tuple[float, np.ndarray]:
    """Maximum s-t flow and the minimum cut consistent with it (the source
    side is the set of nodes reachable in the residual graph).

    Capacities are quantized at CAPACITY_SCALE, so reals are resolved to
    1/CAPACITY_SCALE and integer inputs are handled exactly.
    """
    if graph.edges:
        arr = np.asarray([(u, v, c) for u, v, c in graph.edges if u != v], dtype=float)
    else:
        arr = np.zeros((0, 3))
    if len(arr) and arr[:, 2].min() < 0:
        raise ValueError("capacities must be nonnegative")
    caps = _quantize(arr[:, 2]) if len(arr) else np.zeros(0, dtype=np.int64)
    rows = arr[:, 0].astype(np.int32) if len(arr) else np.zeros(0, dtype=np.int32)
    cols = arr[:, 1].astype(np.int32) if len(arr) else np.zeros(0, dtype=np.int32)
    mat = coo_matrix((caps, (rows, cols)), shape=(graph.n_nodes, graph.n_nodes)).tocsr()
    mat.data = np.minimum(mat.data, _INT_CAP_MAX)
    mat = csr_matrix(mat, dtype=np.int32)

    result = maximum_flow(mat, graph.source, graph.sink)
    residual = mat - result.flow
    reach = breadth_first_order(residual > 0, graph.source, directed=True, return_predecessors=False)
    source_side = np.zeros(graph.n_nodes, dtype=bool)
    source_side[reach] = True
    return float(result.flow_value) / CAPACITY_SCALE, source_side


# ---------------------------------------------------------------------------
# GrabCut refinement


def pairwise_weights(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Contrast-sensitive 4-connectivity weights lambda*exp(-beta*||dz||^2)
    with beta = 1/(2 * mean squared neighbor difference)."""
    img = np.asarray(image, dtype=float)
    dr = np.sum((img[:, 1:] - img[:, :-1]) ** 2, axis=2)
    dd = np.sum((img[1:, :] - img[:-1, :]) ** 2, axis=2)
    mean_sq = (dr.sum() + dd.sum()) / max(dr.size + dd.size, 1)
    beta = 0.0 if mean_sq < 1e-12 else 1.0 / (2.0 * mean_sq)
    return LAMBDA * np.exp(-beta * dr), LAMBDA * np.exp(-beta * dd)


@dataclass
class GrabCutRun:
    mask: np.ndarray
    iterations_run: int
    energies: list[tuple[float, float]]  # (pre-cut, post-cut) per iteration
    all_hard: bool = False


def _labels_energy(
    fg: np.ndarray, soft: np.ndarray, dfg: np.ndarray, dbg: np.ndarray,
    w_right: np.ndarray, w_down: np.ndarray,
) -> float:
    """Gibbs energy of a labeling in quantized units: soft-pixel unaries
    plus pairwise disagreement, i.e. exactly the cut cost."""
    unary = np.where(fg, dfg, dbg)[soft].sum()
    pair = w_right[fg[:, 1:] != fg[:, :-1]].sum() + w_down[fg[1:, :] != fg[:-1, :]].sum()
    return float(unary + pair)


def grabcut_refine_detailed(
    image: np.ndarray, trimap: np.ndarray, iterations: int = 5, seed: int = 0
) -> GrabCutRun:
    """Trimap-constrained iterated segmentation.

    Initial foreground is FG|PFG. Each iteration fits one GMM per side on
    the current segmentation, builds the grid graph with hard terminal
    links for FG/BG pixels, solves the min cut, and relabels only the
    PFG/PBG pixels. Stops early when a cut changes nothing.
    """
    img = np.asarray(image, dtype=float)
    tri = np.asarray(trimap)
    check_same_shape(img, tri)
    h, w = tri.shape
    n = h * w

    fg = (tri == FG) | (tri == PFG)
    soft = (tri == PFG) | (tri == PBG)
    if iterations <= 0:
        return GrabCutRun(fg.astype(np.uint8), 0, [])
    if not soft.any():
        return GrabCutRun(fg.astype(np.uint8), 0, [], all_hard=True)

    w_right, w_down = pairwise_weights(img)
    w_right_q = _quantize(w_right)
    w_down_q = _quantize(w_down)
    hard_fg = (tri == FG).ravel()
    hard_bg = (tri == BG).ravel()
    soft_flat = soft.ravel()
    pixels = img.reshape(-1, 3)
    idx = np.arange(n).reshape(h, w)

    # static parts of the edge list: pairwise arcs (both directions)
    right_u = idx[:, :-1].ravel()
    right_v = idx[:, 1:].ravel()
    down_u = idx[:-1, :].ravel()
    down_v = idx[1:, :].ravel()
    pair_rows = np.concatenate([right_u, right_v, down_u, down_v])
    pair_cols = np.concatenate([right_v, right_u, down_v, down_u])
    pair_caps = np.concatenate(
        [w_right_q.ravel(), w_right_q.ravel(), w_down_q.ravel(), w_down_q.ravel()]
    )

    source = n
    sink = n + 1
    hard_q = _quantize(np.array([HARD_CAPACITY]))[0]
    floor_cost = -np.log(_MIN_LIKELIHOOD)

    energies: list[tuple[float, float]] = []
    cur_fg = fg.copy()
    iterations_run = 0
    for it in range(iterations):
        fg_px = pixels[cur_fg.ravel()]
        bg_px = pixels[~cur_fg.ravel()]
        seed_fg = np.random.SeedSequence((seed, it, 0)).generate_state(1)[0]
        seed_bg = np.random.SeedSequence((seed, it, 1)).generate_state(1)[0]
        dfg = (
            np.full(n, floor_cost)
            if len(fg_px) == 0
            else -fit_gmm(fg_px, GMM_COMPONENTS, seed_fg).log_likelihood(pixels)
        )
        dbg = (
            np.full(n, floor_cost)
            if len(bg_px) == 0
            else -fit_gmm(bg_px, GMM_COMPONENTS, seed_bg).log_likelihood(pixels)
        )
        dfg_q = _quantize(np.maximum(dfg, 0.0))
        dbg_q = _quantize(np.maximum(dbg, 0.0))

        # terminal arcs: source->p pays the bg label, p->sink pays fg
        src_caps = np.where(hard_fg, hard_q, np.where(hard_bg, 0, dbg_q))
        snk_caps = np.where(hard_bg, hard_q, np.where(hard_fg, 0, dfg_q))

        rows = np.concatenate([pair_rows, np.full(n, source), np.arange(n)])
        cols = np.concatenate([pair_cols, np.arange(n), np.full(n, sink)])
        caps = np.concatenate([pair_caps, src_caps, snk_caps])
        keep = caps > 0
        mat = coo_matrix(
            (np.minimum(caps[keep], _INT_CAP_MAX), (rows[keep], cols[keep])),
            shape=(n + 2, n + 2),
        ).tocsr()
        mat = csr_matrix(mat, dtype=np.int32)

        pre = _labels_energy(cur_fg, soft, dfg_q.reshape(h, w), dbg_q.reshape(h, w), w_right_q, w_down_q)

        result = maximum_flow(mat, source, sink)
        residual = mat - result.flow
        reach = breadth_first_order(residual > 0, source, directed=True, return_predecessors=False)
        on_source = np.zeros(n + 2, dtype=bool)
        on_source[reach] = True

        new_fg = cur_fg.ravel().copy()
        new_fg[soft_flat] = on_source[:n][soft_flat]
        new_fg = new_fg.reshape(h, w)

        post = _labels_energy(new_fg, soft, dfg_q.reshape(h, w), dbg_q.reshape(h, w), w_right_q, w_down_q)
        energies.append((pre / CAPACITY_SCALE, post / CAPACITY_SCALE))
        iterations_run = it + 1

        changed = bool(np.any(new_fg != cur_fg))
        cur_fg = new_fg
        if not changed:
            break

    out = cur_fg.astype(np.uint8)
    out[tri == FG] = 1
    out[tri == BG] = 0
    return GrabCutRun(out, iterations_run, energies)


def grabcut_refine(image: np.ndarray, trimap: np.ndarray, iterations: int = 5, seed: int = 0) -> np.ndarray:
    return grabcut_refine_detailed(image, trimap, iterations, seed).mask


def build_trimap(binary: np.ndarray, radius: int = 1) -> np.ndarray:
    """Trimap from a binary mask: FG = eroded mask, BG = outside the
    dilated mask, PFG = mask minus FG, PBG = the remaining ring. Label
    precedence FG > PFG > PBG > BG resolves the overlaps."""
    from .raster import dilate, erode

    m = as_mask(binary)
    fg = erode(m, radius).astype(bool)
    grown = dilate(m, radius).astype(bool)
    out = np.full(m.shape, BG, dtype=np.uint8)
    out[grown & ~fg] = PBG
    out[m.astype(bool) & ~fg] = PFG
    out[fg] = FG
    return out


def demote_hard_foreground(trimap: np.ndarray) -> np.ndarray:
    """FG pixels become PFG (first-pass call wants no hard foreground)."""
    out = np.asarray(trimap).copy()
    out[out == FG] = PFG
    return out

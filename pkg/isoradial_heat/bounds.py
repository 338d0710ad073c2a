"""Path-product kernel bounds, volume growth and Poincare constants."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from . import constants
from .errors import FeasibilityError, GeometryError, PreconditionError
from .geometry import IsoradialGraph, Point, bfs_distances, combinatorial_ball, combinatorial_distance, project
from .kernel import kernel_log_entries
from .operators import SparseGenerator, WeightConstants, WeightSet

logger = logging.getLogger(__name__)

VertexLike = int | Point | complex | Sequence[float]


@dataclass(frozen=True)
class PathProductBound:
    lower: float
    upper: float
    lower_path_length: int
    upper_path_length: int
    n_max: int
    distance: int
    cutoff_certified: bool


@dataclass(frozen=True)
class SandwichRow:
    x: int
    y: int
    t: float
    lower: float
    exact: float
    exact_error: float
    upper: float

    @property
    def margin(self) -> float:
        return min(self.exact - self.lower, self.upper - self.exact)

    @property
    def holds(self) -> bool:
        return self.lower <= self.exact + self.exact_error and self.exact - self.exact_error <= self.upper


@dataclass(frozen=True, eq=False)
class GaussianFit:
    c_l: float
    C_l: float
    offsets: np.ndarray
    spreads: np.ndarray

    def holds_on(self, offsets: np.ndarray, spreads: np.ndarray) -> bool:
        return bool(np.all(math.log(self.c_l) <= offsets + self.C_l * spreads + 1e-12))


# ---------------------------------------------------------------------------
# Path-product bounds
# ---------------------------------------------------------------------------


def metzger_bounds(
    g: IsoradialGraph, w: WeightSet, x: VertexLike, y: VertexLike, t: float, n_max: int | None = None
) -> PathProductBound:
    xv, yv = _vertex(g, x), _vertex(g, y)
    if xv == yv:
        raise PreconditionError("Path-product bounds need distinct endpoints after projection.")
    if t <= 0:
        raise PreconditionError(f"Time must be positive, got {t}.")
    d = combinatorial_distance(g, xv, yv)
    if n_max is None:
        n_max = d + 4 * math.ceil(float(np.nanmax(w.lam)) * t) + 20
    if n_max < d:
        raise PreconditionError(f"n_max={n_max} is below the combinatorial distance {d}.")

    mu_max = w.mu_max
    M = w.consts.M
    lengths, best = path_log_products(g, w, xv, yv, d, n_max)
    terms = lengths * np.log(t / lengths) + best
    k = int(np.argmax(terms))
    lower = -mu_max * M * t - constants.HALF_LOG_TWO_PI + float(terms[k])

    beyond = n_max + 1
    per_step = t * mu_max / beyond
    certified = per_step < 1 and (
        beyond < t * mu_max / math.e or beyond * math.log(per_step) <= float(terms[k])
    )
    if not certified:
        logger.warning("Path-length cutoff n_max=%d not certified for t=%.6g", n_max, t)

    log_factor, upper_length = _best_normalized_path(g, w, xv, yv)
    upper = mu_max * M * t + 1.0 + log_factor + d * math.log(math.e * M * mu_max * t / d)
    return PathProductBound(
        lower=lower,
        upper=upper,
        lower_path_length=int(lengths[k]),
        upper_path_length=upper_length,
        n_max=int(n_max),
        distance=d,
        cutoff_certified=bool(certified),
    )


def path_log_products(
    g: IsoradialGraph, w: WeightSet, x: int, y: int, n_min: int, n_max: int
) -> tuple[np.ndarray, np.ndarray]:
    """Max over paths of length n from x to y of sum(log mu), for n in [n_min, n_max].

    Max-plus recursion ``L_{n+1}(w) = max_{v~w} L_n(v) + log mu_vw``; lengths
    with no admissible path are dropped.
    """
    n = g.n_vertices
    src = np.repeat(np.arange(n), g.degrees)
    valid = np.isfinite(w.mu)
    src, dst, log_mu = src[valid], g.indices[valid], np.log(w.mu[valid])
    order = np.argsort(dst, kind="stable")
    src, dst, log_mu = src[order], dst[order], log_mu[order]
    targets, starts = np.unique(dst, return_index=True)

    state = np.full(n, -math.inf)
    state[x] = 0.0
    lengths, values = [], []
    for length in range(1, n_max + 1):
        vals = state[src] + log_mu
        nxt = np.full(n, -math.inf)
        nxt[targets] = np.maximum.reduceat(vals, starts)
        state = nxt
        if length >= n_min and math.isfinite(state[y]):
            lengths.append(length)
            values.append(state[y])
    if not lengths:
        raise PreconditionError(f"No admissible path from {x} to {y} of length at most {n_max}.")
    return np.asarray(lengths, dtype=float), np.asarray(values)


def _best_normalized_path(g: IsoradialGraph, w: WeightSet, x: int, y: int) -> tuple[float, int]:
    """log sup over paths of prod(mu / mu_max) and the length of a maximizer."""
    n = g.n_vertices
    src = np.repeat(np.arange(n), g.degrees)
    valid = np.isfinite(w.mu)
    # Tiny offset keeps zero-cost edges explicit in the sparse graph.
    cost = np.maximum(-np.log(w.mu[valid] / w.mu_max), 0.0) + 1e-300
    graph = sparse.csr_matrix((cost, (src[valid], g.indices[valid])), shape=(n, n))
    dist, pred = csgraph.dijkstra(graph, directed=True, indices=x, return_predecessors=True)
    if not np.isfinite(dist[y]):
        raise GeometryError(f"No admissible path from {x} to {y}.")
    length, v = 0, y
    while v != x:
        v = pred[v]
        length += 1
    return -float(dist[y]), length


def improved_lower_bound(
    g: IsoradialGraph, w: WeightSet, x: VertexLike, y: VertexLike, t: float, h: float, beta: float
) -> float:
    """Log of the simplified lower bound for ``p_{h^beta t}(x, y)``."""
    d = combinatorial_distance(g, _vertex(g, x), _vertex(g, y))
    c = w.consts
    scale = h ** (beta - 2.0)
    if d <= c.alpha1 * scale * t:
        raise PreconditionError(
            f"Improved bound needs d^c > alpha1 h^(beta-2) t; got d^c={d}, "
            f"alpha1 h^(beta-2) t={c.alpha1 * scale * t:.6g}."
        )
    return -c.alpha2 * scale * c.M * t - constants.HALF_LOG_TWO_PI + d * math.log(c.alpha1 * scale * t / d)


def graph_regime_scale(h: float, beta: float) -> float:
    """The factor h / log h^(beta-1) of the graph regime."""
    if not 0 < h < 1:
        raise PreconditionError(f"Graph regime scaling needs 0 < h < 1, got {h}.")
    if beta == 1:
        raise PreconditionError("The graph regime scaling is undefined at the critical exponent beta = 1.")
    return h / ((beta - 1.0) * math.log(h))


def graph_regime_rate(d: int, h: float, beta: float, t: float, consts: WeightConstants) -> float:
    """Graph-regime scaling of the improved lower bound at combinatorial distance d.

    Tends to ``h * d`` as ``h -> 0`` with ``h * d`` fixed.
    """
    scale = h ** (beta - 2.0)
    if d <= consts.alpha1 * scale * t:
        raise PreconditionError(f"Need d > alpha1 h^(beta-2) t; got d={d}.")
    log_bound = -consts.alpha2 * scale * consts.M * t - constants.HALF_LOG_TWO_PI + d * math.log(consts.alpha1 * scale * t / d)
    return graph_regime_scale(h, beta) * log_bound


def metzger_sandwich(
    gen: SparseGenerator,
    g: IsoradialGraph,
    w: WeightSet,
    sources: Iterable[int],
    targets: Sequence[int],
    t: float,
    tol: float = constants.DEFAULT_ENTRY_REL_TOL,
) -> list[SandwichRow]:
    rows = []
    for x in sources:
        others = [y for y in targets if y != x]
        entries = kernel_log_entries(gen, x, others, t, tol)
        for y, entry in zip(others, entries):
            bound = metzger_bounds(g, w, x, y, t)
            rows.append(
                SandwichRow(
                    x=int(x),
                    y=int(y),
                    t=t,
                    lower=bound.lower,
                    exact=entry.log_value,
                    exact_error=entry.log_error_bound,
                    upper=bound.upper,
                )
            )
    return rows


def write_sandwich_csv(rows: Sequence[SandwichRow], path: Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pair", "t", "lower", "exact", "upper", "margin"])
        for row in rows:
            writer.writerow(
                [f"{row.x}-{row.y}", repr(row.t), repr(row.lower), repr(row.exact), repr(row.upper), repr(row.margin)]
            )


# ---------------------------------------------------------------------------
# Volume growth
# ---------------------------------------------------------------------------


def volume(g: IsoradialGraph, w: WeightSet, u: int, n: int) -> float:
    return float(math.fsum(w.m[combinatorial_ball(g, u, n)]))


def volume_profile(g: IsoradialGraph, w: WeightSet, u: int, radii: Sequence[int]) -> np.ndarray:
    radii = np.asarray(radii, dtype=int)
    top = int(radii.max())
    dist = bfs_distances(g, u, limit=top)
    reached = np.flatnonzero(np.isfinite(dist))
    if not np.all(g.interior[reached]):
        raise GeometryError(f"Ball of radius {top} around vertex {u} is clipped by the window boundary.")
    shells = np.bincount(dist[reached].astype(int), weights=w.m[reached], minlength=top + 1)
    return np.cumsum(shells)[radii]


def volume_growth_fit(g: IsoradialGraph, w: WeightSet, u: int, n_range: tuple[int, int]) -> float:
    lo, hi = n_range
    if lo < 1 or hi <= lo:
        raise PreconditionError(f"Volume fit needs 1 <= lo < hi, got {n_range}.")
    radii = np.arange(lo, hi + 1)
    vols = volume_profile(g, w, u, radii)
    slope, _ = np.polyfit(np.log(radii), np.log(vols), 1)
    return float(slope)


def ball_area(g: IsoradialGraph, u: int, n: int) -> float:
    """Total dual area of the ball; at most pi * h^2 * (n + 1)^2."""
    return float(math.fsum(g.dual_areas[combinatorial_ball(g, u, n)]))


# ---------------------------------------------------------------------------
# Poincare inequality
# ---------------------------------------------------------------------------


def poincare_constant(g: IsoradialGraph, w: WeightSet, u: int, n: int, method: str = "auto") -> float:
    """Smallest C with the weighted ball variance on B_n bounded by C n^2 times the
    energy on B_{2n}.

    The energy sums ``omega (f(w) - f(v))^2`` over ordered adjacent pairs, i.e.
    twice over each unordered edge.
    """
    if n < 1:
        return 0.0
    big = combinatorial_ball(g, u, 2 * n)
    dist = bfs_distances(g, u, limit=2 * n)[big]
    small = dist <= n
    size = len(big)

    index_of = np.full(g.n_vertices, -1, dtype=np.int64)
    index_of[big] = np.arange(size)
    a, b = index_of[g.edges[:, 0]], index_of[g.edges[:, 1]]
    keep = (a >= 0) & (b >= 0)
    a, b, omega = a[keep], b[keep], w.omega[keep]
    weights = sparse.csr_matrix((np.concatenate([omega, omega]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(size, size))
    laplacian = sparse.diags(np.asarray(weights.sum(axis=1)).ravel()) - weights
    energy = (2.0 * n * n) * laplacian.tocsr()

    m = np.where(small, w.m[big], 0.0)
    vol = float(m.sum())
    shift = float(energy.diagonal().mean()) / size

    if method == "auto":
        method = "dense" if size <= constants.DENSE_EIGEN_LIMIT else "iterative"
    if method == "dense":
        variance = np.diag(m) - np.outer(m, m) / vol
        rhs = energy.toarray() + shift
        value = float(linalg.eigh(variance, rhs, eigvals_only=True)[-1])
    elif method == "iterative":
        ones = np.ones(size)

        def variance_op(f: np.ndarray) -> np.ndarray:
            return m[:, None] * f - np.outer(m, m @ f) / vol

        def rhs_op(f: np.ndarray) -> np.ndarray:
            return energy @ f + shift * np.outer(ones, ones @ f)

        A = splinalg.LinearOperator((size, size), matmat=variance_op, matvec=lambda f: variance_op(f[:, None]).ravel(), dtype=float)
        B = splinalg.LinearOperator((size, size), matmat=rhs_op, matvec=lambda f: rhs_op(f[:, None]).ravel(), dtype=float)
        start = np.random.default_rng(0).standard_normal((size, 1)) * m[:, None] + 1e-3
        values, _ = splinalg.lobpcg(A, start, B=B, largest=True, tol=1e-12, maxiter=2000)
        value = float(values[0])
    else:
        raise ValueError(f"Unknown eigen method {method!r}; use 'auto', 'dense' or 'iterative'.")
    logger.debug("Poincare constant u=%d n=%d size=%d method=%s -> %.6g", u, n, size, method, value)
    return value


# ---------------------------------------------------------------------------
# Gaussian lower bound fit
# ---------------------------------------------------------------------------


def gaussian_lower_fit(
    gen_constant_speed: SparseGenerator,
    g: IsoradialGraph,
    w: WeightSet,
    pairs: Sequence[tuple[int, int]],
    times: Sequence[float],
    c_grid: Sequence[float] | None = None,
    C_grid: Sequence[float] | None = None,
    tol: float = constants.DEFAULT_ENTRY_REL_TOL,
) -> GaussianFit:
    """Fit ``p~_t(u,v) >= c_l m_v / vol(u, sqrt t) exp(-C_l d^2 / t)``.

    Picks the smallest ``C_l`` on the grid admitting some grid ``c_l``, then the
    largest feasible ``c_l`` for it.
    """
    offsets, spreads = gaussian_samples(gen_constant_speed, g, w, pairs, times, tol)
    c_grid = np.sort(np.geomspace(1e-4, 1.0, 41) if c_grid is None else np.asarray(c_grid, dtype=float))
    C_grid = np.sort(np.linspace(0.05, 5.0, 100) if C_grid is None else np.asarray(C_grid, dtype=float))
    for C in C_grid:
        log_c_max = float(np.min(offsets + C * spreads))
        feasible = c_grid[np.log(c_grid) <= log_c_max + 1e-12]
        if len(feasible):
            return GaussianFit(c_l=float(feasible[-1]), C_l=float(C), offsets=offsets, spreads=spreads)
    raise FeasibilityError(
        "No (c_l, C_l) on the grid satisfies the Gaussian lower bound on every sample; "
        "widen C_grid or lower the smallest c_grid value.",
        details={"worst_offset": float(np.min(offsets + C_grid[-1] * spreads))},
    )


def gaussian_samples(
    gen_constant_speed: SparseGenerator,
    g: IsoradialGraph,
    w: WeightSet,
    pairs: Sequence[tuple[int, int]],
    times: Sequence[float],
    tol: float = constants.DEFAULT_ENTRY_REL_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Per sample: log p~ - log(m_v / vol) and d^2 / t."""
    offsets, spreads = [], []
    by_source: dict[int, list[int]] = {}
    for u, v in pairs:
        by_source.setdefault(int(u), []).append(int(v))
    for u, targets in by_source.items():
        dist = bfs_distances(g, u)[targets]
        for t in times:
            if np.any(dist > t):
                raise PreconditionError(f"Gaussian fit needs t >= d^c for every pair; t={t} is too small.")
            entries = kernel_log_entries(gen_constant_speed, u, targets, t, tol)
            vol = volume(g, w, u, int(math.floor(math.sqrt(t))))
            for v, d, entry in zip(targets, dist, entries):
                certified = entry.log_value - entry.log_error_bound
                offsets.append(certified - math.log(w.m[v]) + math.log(vol))
                spreads.append(float(d) ** 2 / t)
    return np.asarray(offsets), np.asarray(spreads)


def _vertex(g: IsoradialGraph, p: VertexLike) -> int:
    if isinstance(p, (int, np.integer)):
        return int(p)
    return project(g, p)

"""Certified evaluation of heat kernel rows and entries by uniformization.

``p_t(u, .) = sum_k Pois(rate * t)(k) * delta_u P^k`` with ``P = I + Q / rate``.
Since ``P`` moves mass by at most one edge per step, the first ``K`` terms are
supported on the combinatorial ``K``-ball around ``u`` exactly; the only error
is the Poisson tail beyond ``K`` (plus rounding).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, sparse, special, stats
from scipy.sparse import csgraph

from . import constants
from .errors import PreconditionError, WindowTooSmallError
from .geometry import IsoradialGraph, Point
from .operators import SparseGenerator

logger = logging.getLogger(__name__)

RegionPredicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class KernelRow:
    """One row of the kernel on a truncation ball.

    Values are ``stored * exp(log_scale)``.
    """

    source: int
    t: float
    vertices: np.ndarray
    stored: np.ndarray
    log_scale: float
    leaked_mass_bound: float
    steps_used: int

    @property
    def values(self) -> np.ndarray:
        return self.stored * math.exp(self.log_scale) if math.isfinite(self.log_scale) else np.zeros_like(self.stored)

    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.stored) + self.log_scale

    def value(self, v: int) -> float:
        hit = np.flatnonzero(self.vertices == v)
        return float(self.values[hit[0]]) if len(hit) else 0.0

    def as_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.vertices] = self.values
        return out

    def total_mass(self) -> float:
        return float(math.fsum(self.values))

    def write_csv(self, path: Path, g: IsoradialGraph) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["vertex", "x", "y", "value", "log_value"])
            for v, value, log_value in zip(self.vertices, self.values, self.log_values()):
                x, y = g.positions[v]
                writer.writerow([int(v), repr(float(x)), repr(float(y)), repr(float(value)), repr(float(log_value))])


@dataclass(frozen=True)
class LogEntry:
    log_value: float
    rel_error_bound: float
    steps_used: int

    @property
    def log_error_bound(self) -> float:
        return math.log1p(self.rel_error_bound) if self.rel_error_bound < 1 else math.inf


@dataclass(frozen=True)
class KernelMoments:
    mean: Point
    second_re: float
    second_im: float
    cross: float
    first_error_bound: float
    second_error_bound: float


# ---------------------------------------------------------------------------
# Poisson tail
# ---------------------------------------------------------------------------


def poisson_cutoff(mean: float, log_target: float) -> int:
    """Smallest K with log P(N > K) <= log_target for N ~ Pois(mean).

    A Chernoff bound brackets K from above, then the exact tail is bisected.
    """
    if mean <= 0:
        return 0
    hi = max(1, int(math.ceil(mean)))
    while _chernoff_log_tail(hi, mean) > log_target:
        hi *= 2
    lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if _log_tail(mid, mean) <= log_target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _chernoff_log_tail(k: int, mean: float) -> float:
    # log P(N >= k + 1) <= -mean + (k + 1) - (k + 1) log((k + 1) / mean), valid for k + 1 > mean.
    j = k + 1
    if j <= mean:
        return 0.0
    return -mean + j - j * math.log(j / mean)


def _log_tail(k: int, mean: float) -> float:
    if mean <= 0:
        return -math.inf
    value = float(stats.poisson.logsf(k, mean))
    # logsf underflows to -inf far in the tail; fall back to the Chernoff bound.
    return value if math.isfinite(value) else _chernoff_log_tail(k, mean)


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------


def kernel_row(gen: SparseGenerator, u: int, t: float, tol: float = constants.DEFAULT_ROW_TOL) -> KernelRow:
    _check_inputs(gen, u, t, tol)
    mean = gen.rate * t
    if t == 0 or mean == 0:
        return KernelRow(u, t, np.array([u]), np.array([1.0]), 0.0, 0.0, 0)

    steps = poisson_cutoff(mean, math.log(tol / 2.0))
    _require_radius(gen, u, steps)
    ball, transition = _ball_transition(gen, u, steps)
    log_weights = stats.poisson.logpmf(np.arange(steps + 1), mean)

    vec = np.zeros(len(ball))
    vec[0] = 1.0
    vec_scale = 0.0
    acc = np.zeros(len(ball))
    acc_scale = -math.inf
    for k in range(steps + 1):
        c = log_weights[k] + vec_scale
        if c > acc_scale:
            acc = acc * math.exp(acc_scale - c) + vec
            acc_scale = c
        else:
            acc += math.exp(c - acc_scale) * vec
        if k < steps:
            vec = transition @ vec
            peak = vec.max()
            vec /= peak
            vec_scale += math.log(peak)

    leaked = float(math.exp(_log_tail(steps, mean)))
    logger.debug("kernel_row u=%d t=%.6g K=%d ball=%d leaked<=%.3g", u, t, steps, len(ball), leaked)
    return KernelRow(u, t, ball, acc, acc_scale, leaked, steps)


def dense_kernel(gen: SparseGenerator, t: float) -> np.ndarray:
    """Dense ``exp(tQ)``; row ``u`` is the law of the walk started at ``u``."""
    return linalg.expm(t * gen.matrix.toarray())


# ---------------------------------------------------------------------------
# Log-domain entries
# ---------------------------------------------------------------------------


def kernel_log_entry(
    gen: SparseGenerator, u: int, v: int, t: float, tol: float = constants.DEFAULT_ENTRY_REL_TOL
) -> LogEntry:
    return kernel_log_entries(gen, u, [v], t, tol)[0]


def kernel_log_entries(
    gen: SparseGenerator,
    u: int,
    targets: Sequence[int],
    t: float,
    tol: float = constants.DEFAULT_ENTRY_REL_TOL,
) -> list[LogEntry]:
    """Natural logs of ``p_t(u, v)`` for each target with a relative error bound.

    The distribution is propagated in the log domain, so entries far below the
    double-precision range survive. The step count grows until the Poisson tail
    is below ``tol`` times every requested entry.
    """
    _check_inputs(gen, u, t, tol)
    targets = np.asarray(targets, dtype=np.int64)
    mean = gen.rate * t
    if t == 0 or mean == 0:
        return [LogEntry(0.0 if v == u else -math.inf, 0.0, 0) for v in targets]

    full = csgraph.dijkstra(_pattern(gen), directed=False, unweighted=True, indices=u)
    unreachable = ~np.isfinite(full[targets])
    radius = float(gen.boundary_distance[u])
    if math.isfinite(radius):
        cap = int(radius) - 1
    else:
        cap = poisson_cutoff(mean, -700.0 + math.log(tol)) + int(np.nanmax(np.where(np.isfinite(full), full, 0)))
    needed = int(np.max(full[targets][~unreachable])) if np.any(~unreachable) else 0
    if needed > cap:
        raise WindowTooSmallError(source=u, required_radius=needed + 1, available_radius=radius)

    ball, transition = _ball_transition(gen, u, cap)
    index_of = np.full(gen.dimension, -1, dtype=np.int64)
    index_of[ball] = np.arange(len(ball))
    local = index_of[targets]

    logp = transition.tocsr(copy=True)
    logp.eliminate_zeros()
    log_data = np.log(logp.data)
    rows = np.repeat(np.arange(len(ball)), np.diff(logp.indptr))

    state = np.full(len(ball), -math.inf)
    state[0] = 0.0
    acc = np.full(len(targets), -math.inf)
    log_tol = math.log(tol)
    reachable = ~unreachable
    steps = 0
    for k in range(cap + 1):
        steps = k
        acc[reachable] = np.logaddexp(acc[reachable], stats.poisson.logpmf(k, mean) + state[local[reachable]])
        tail = _log_tail(k, mean)
        if np.all(np.isfinite(acc[reachable])) and np.all(tail <= log_tol + acc[reachable]):
            break
        if k == cap:
            worst = float(np.min(acc[reachable]))
            required = (
                poisson_cutoff(mean, log_tol + worst) if math.isfinite(worst) else cap + needed + 1
            )
            raise WindowTooSmallError(source=u, required_radius=max(required, cap + 1) + 1, available_radius=radius)
        state = _log_step(state, logp.indptr, logp.indices, log_data, rows)

    tail = _log_tail(steps, mean)
    rounding = (steps + 1) * constants.ROUNDING_PER_STEP
    out = []
    for i, v in enumerate(targets):
        if unreachable[i]:
            out.append(LogEntry(-math.inf, 0.0, steps))
        else:
            out.append(LogEntry(float(acc[i]), math.exp(tail - acc[i]) + rounding, steps))
    logger.debug("kernel_log_entries u=%d t=%.6g K=%d targets=%d", u, t, steps, len(targets))
    return out


def _log_step(
    state: np.ndarray, indptr: np.ndarray, indices: np.ndarray, log_data: np.ndarray, rows: np.ndarray
) -> np.ndarray:
    # Row w of the transposed transition lists every v with P[v, w] > 0.
    # Empty rows stay at -inf; reduceat only sees the starts of filled rows.
    out = np.full(len(indptr) - 1, -math.inf)
    filled = np.diff(indptr) > 0
    if not np.any(filled):
        return out
    starts = indptr[:-1][filled]
    vals = state[indices] + log_data
    peak = np.zeros(len(out))
    top = np.maximum.reduceat(vals, starts)
    peak[filled] = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        total = np.add.reduceat(np.exp(vals - peak[rows]), starts)
        out[filled] = peak[filled] + np.log(total)
    return out


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------


def kernel_moments(
    gen: SparseGenerator, g: IsoradialGraph, u: int, t: float, tol: float = constants.DEFAULT_ROW_TOL
) -> KernelMoments:
    row = kernel_row(gen, u, t, tol)
    values = row.values
    disp = g.positions[row.vertices] - g.positions[u]
    dx, dy = disp[:, 0], disp[:, 1]
    mean = gen.rate * t
    step = float(g.edge_lengths.max())
    k = row.steps_used
    first_error = step * mean * math.exp(_log_tail(k - 1, mean)) if k else 0.0
    second_error = (
        step**2 * (mean**2 * math.exp(_log_tail(k - 2, mean)) + mean * math.exp(_log_tail(k - 1, mean))) if k else 0.0
    )
    return KernelMoments(
        mean=Point(float(np.dot(values, dx)), float(np.dot(values, dy))),
        second_re=float(np.dot(values, dx * dx)),
        second_im=float(np.dot(values, dy * dy)),
        cross=float(np.dot(values, dx * dy)),
        first_error_bound=first_error,
        second_error_bound=second_error,
    )


def kernel_event_probability(
    gen: SparseGenerator,
    g: IsoradialGraph,
    u: int,
    t: float,
    region: RegionPredicate,
    tol: float = constants.DEFAULT_ROW_TOL,
) -> float:
    return math.exp(log_event_probability(gen, g, u, t, region, tol)[0])


def log_event_probability(
    gen: SparseGenerator,
    g: IsoradialGraph,
    u: int,
    t: float,
    region: RegionPredicate,
    tol: float = constants.DEFAULT_ROW_TOL,
) -> tuple[float, float]:
    """Log of the event probability and its additive error bound."""
    row = kernel_row(gen, u, t, tol)
    inside = np.asarray(region(g.positions[row.vertices]), dtype=bool)
    mass = math.fsum(row.stored[inside])
    if mass == 0:
        return -math.inf, row.leaked_mass_bound
    return math.log(mass) + row.log_scale, row.leaked_mass_bound


def square_lattice_log_kernel(rate: float, t: float, a: int, b: int) -> float:
    """Closed form on a square lattice: independent coordinate walks.

    Each coordinate jumps at rate ``rate / 2``, so its displacement law is
    ``exp(-z) I_|a|(z)`` with ``z = rate * t / 2``.
    """
    z = 0.5 * rate * t
    return float(np.log(special.ive(abs(a), z)) + np.log(special.ive(abs(b), z)))


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _check_inputs(gen: SparseGenerator, u: int, t: float, tol: float) -> None:
    if t < 0:
        raise PreconditionError(f"Time must be nonnegative, got {t}.")
    if tol <= 0:
        raise PreconditionError(f"Tolerance must be positive, got {tol}.")
    if not gen.interior[u]:
        raise PreconditionError(f"Source vertex {u} is not an interior vertex.")


def _require_radius(gen: SparseGenerator, u: int, steps: int) -> None:
    radius = float(gen.boundary_distance[u])
    if radius <= steps:
        raise WindowTooSmallError(source=u, required_radius=steps + 1, available_radius=radius)


def _pattern(gen: SparseGenerator) -> sparse.csr_matrix:
    pattern = gen.matrix.copy()
    pattern.data = np.ones_like(pattern.data)
    return pattern


def _ball_transition(gen: SparseGenerator, u: int, radius: int) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Ball around ``u`` (source first) and the transposed one-step matrix on it."""
    dist = csgraph.dijkstra(_pattern(gen), directed=False, unweighted=True, indices=u, limit=radius)
    ball = np.flatnonzero(np.isfinite(dist))
    ball = np.concatenate([[u], ball[ball != u]])
    sub = gen.matrix[ball][:, ball]
    step = sparse.identity(len(ball), format="csr") + sub / gen.rate
    return ball, step.T.tocsr()

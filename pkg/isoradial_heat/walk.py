"""Monte Carlo sampling of the variable-speed walk and its time change.

Randomness is keyed by ``(seed, index)`` through a counter-based Philox
stream, so results do not depend on how work is scheduled across threads.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import constants
from .errors import BoundaryHitError, PreconditionError
from .geometry import IsoradialGraph, Point, combinatorial_distance
from .operators import WeightSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WalkTrajectory:
    start: int
    jump_times: np.ndarray
    vertices: np.ndarray
    end_time: float
    seed: int
    index: int = 0
    clock: str = "variable"

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def final_vertex(self) -> int:
        return int(self.vertices[-1])

    def vertex_at(self, s: float) -> int:
        return int(self.vertices[np.searchsorted(self.jump_times, s, side="right")])

    def write_csv(self, path: Path, g: IsoradialGraph) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["step", "time", "vertex", "x", "y"])
            times = np.concatenate([[0.0], self.jump_times])
            for step, (time, v) in enumerate(zip(times, self.vertices)):
                x, y = g.positions[v]
                writer.writerow([step, repr(float(time)), int(v), repr(float(x)), repr(float(y))])


@dataclass(frozen=True)
class EmpiricalMoments:
    n_samples: int
    mean: Point
    mean_se: Point
    var_re: float
    var_re_se: float
    var_im: float
    var_im_se: float
    cov: float
    cov_se: float
    fourth_moment_ratio: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "mean": [self.mean.x, self.mean.y],
            "mean_se": [self.mean_se.x, self.mean_se.y],
            "var_re": self.var_re,
            "var_re_se": self.var_re_se,
            "var_im": self.var_im,
            "var_im_se": self.var_im_se,
            "cov": self.cov,
            "cov_se": self.cov_se,
            "fourth_moment_ratio": self.fourth_moment_ratio,
        }


@dataclass(frozen=True)
class TimeChangeBounds:
    sup_holding_scale: float
    inverse_slope_lower: float
    measured_inverse_slope: float


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


class _JumpTable:
    """Padded neighbour table with cumulative jump probabilities ``omega / m``."""

    def __init__(self, g: IsoradialGraph, w: WeightSet) -> None:
        n = g.n_vertices
        width = max(g.max_degree, 1)
        src = np.repeat(np.arange(n), g.degrees)
        pos = np.arange(len(g.indices)) - g.indptr[src]
        self.neighbors = np.zeros((n, width), dtype=np.int64)
        self.neighbors[src, pos] = g.indices
        probs = np.zeros((n, width))
        probs[src, pos] = np.nan_to_num(w.omega[g.slot_edge] / w.m[src])
        cumulative = np.cumsum(probs, axis=1)
        cumulative[np.arange(n), np.maximum(g.degrees - 1, 0)] = 1.0
        cumulative[np.arange(width)[None, :] >= g.degrees[:, None]] = np.inf
        self.cumulative = cumulative
        self.rates = w.lam
        self.interior = g.interior

    def choose(self, current: np.ndarray, r: np.ndarray) -> np.ndarray:
        slot = np.sum(self.cumulative[current] < r[:, None], axis=1)
        return self.neighbors[current, slot]


def sample_trajectory(
    g: IsoradialGraph, w: WeightSet, u0: int, T: float, seed: int, index: int = 0
) -> WalkTrajectory:
    _check_start(g, u0, T)
    table = _JumpTable(g, w)
    rng = stream(seed, index)
    times: list[float] = []
    path = [u0]
    now = 0.0
    current = u0
    while True:
        now += rng.exponential(1.0 / table.rates[current])
        if now > T:
            break
        current = int(table.choose(np.array([current]), rng.random(1))[0])
        if not table.interior[current]:
            raise BoundaryHitError(
                vertex=current, time=now, required_radius=combinatorial_distance(g, u0, current) + 1
            )
        times.append(now)
        path.append(current)
    return WalkTrajectory(
        start=u0,
        jump_times=np.asarray(times, dtype=float),
        vertices=np.asarray(path, dtype=np.int64),
        end_time=float(T),
        seed=seed,
        index=index,
    )


def sample_endpoints(
    g: IsoradialGraph,
    w: WeightSet,
    u0: int,
    T: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Positions ``X_T`` (as vertex ids) of ``n_samples`` independent walks."""
    _check_start(g, u0, T)
    table = _JumpTable(g, w)
    sizes = [min(constants.WALK_CHUNK, n_samples - start) for start in range(0, n_samples, constants.WALK_CHUNK)]

    def run(chunk: int) -> np.ndarray:
        return _sample_chunk(g, table, u0, T, sizes[chunk], stream(seed, chunk))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(chunk) for chunk in range(len(sizes))]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _sample_chunk(
    g: IsoradialGraph, table: _JumpTable, u0: int, T: float, size: int, rng: np.random.Generator
) -> np.ndarray:
    current = np.full(size, u0, dtype=np.int64)
    clock = np.zeros(size)
    active = np.arange(size)
    while len(active):
        clock[active] += rng.exponential(1.0 / table.rates[current[active]])
        active = active[clock[active] <= T]
        if not len(active):
            break
        nxt = table.choose(current[active], rng.random(len(active)))
        outside = ~table.interior[nxt]
        if np.any(outside):
            hit = int(nxt[outside][0])
            raise BoundaryHitError(
                vertex=hit,
                time=float(clock[active][outside][0]),
                required_radius=combinatorial_distance(g, u0, hit) + 1,
            )
        current[active] = nxt
    return current


def empirical_moments(
    g: IsoradialGraph,
    w: WeightSet,
    u0: int,
    T: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
) -> EmpiricalMoments:
    if n_samples < 1000:
        raise PreconditionError(f"empirical_moments needs at least 1000 samples, got {n_samples}.")
    ends = sample_endpoints(g, w, u0, T, n_samples, seed, workers)
    disp = g.positions[ends] - g.positions[u0]
    dx, dy = disp[:, 0], disp[:, 1]
    root_n = math.sqrt(n_samples)

    def se(values: np.ndarray) -> float:
        return float(np.std(values, ddof=1) / root_n)

    second = float(np.mean(dx * dx))
    return EmpiricalMoments(
        n_samples=n_samples,
        mean=Point(float(np.mean(dx)), float(np.mean(dy))),
        mean_se=Point(se(dx), se(dy)),
        var_re=second,
        var_re_se=se(dx * dx),
        var_im=float(np.mean(dy * dy)),
        var_im_se=se(dy * dy),
        cov=float(np.mean(dx * dy)),
        cov_se=se(dx * dy),
        fourth_moment_ratio=float(np.mean(dx**4) / (3.0 * second**2)) if second > 0 else math.nan,
    )


def empirical_distribution(
    g: IsoradialGraph, w: WeightSet, u0: int, T: float, n_samples: int, seed: int, workers: int = 1
) -> np.ndarray:
    ends = sample_endpoints(g, w, u0, T, n_samples, seed, workers)
    return np.bincount(ends, minlength=g.n_vertices) / n_samples


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# ---------------------------------------------------------------------------
# Time change
# ---------------------------------------------------------------------------


def time_change(traj: WalkTrajectory, w: WeightSet) -> WalkTrajectory:
    """Re-time a variable-speed path onto the constant-speed clock.

    The clock runs at ``lam(u) = m_u / (2 A_u)`` per unit of original time while
    the walk sits at ``u``; the resulting walk jumps at rate 1.
    """
    if traj.clock != "variable":
        raise PreconditionError("time_change expects a trajectory on the variable-speed clock.")
    return _retime(traj, w.lam, "constant")


def inverse_time_change(traj: WalkTrajectory, w: WeightSet) -> WalkTrajectory:
    if traj.clock != "constant":
        raise PreconditionError("inverse_time_change expects a trajectory on the constant-speed clock.")
    return _retime(traj, 1.0 / w.lam, "variable")


def _retime(traj: WalkTrajectory, speed: np.ndarray, clock: str) -> WalkTrajectory:
    holding = np.diff(np.concatenate([[0.0], traj.jump_times]))
    scaled = holding * speed[traj.vertices[:-1]]
    times = np.cumsum(scaled)
    last = times[-1] if len(times) else 0.0
    last_time = traj.jump_times[-1] if traj.n_jumps else 0.0
    end = last + (traj.end_time - last_time) * speed[traj.vertices[-1]]
    return WalkTrajectory(
        start=traj.start,
        jump_times=times,
        vertices=traj.vertices.copy(),
        end_time=float(end),
        seed=traj.seed,
        index=traj.index,
        clock=clock,
    )


def time_change_bounds(g: IsoradialGraph, w: WeightSet) -> TimeChangeBounds:
    inner = g.interior
    scale = 2.0 * w.A[inner] / w.m[inner]
    c = w.consts
    return TimeChangeBounds(
        sup_holding_scale=float(scale.max()),
        inverse_slope_lower=c.c_d / (2.0 * c.kappa2 * w.h**2),
        measured_inverse_slope=float(w.lam[inner].min()),
    )


def _check_start(g: IsoradialGraph, u0: int, T: float) -> None:
    if T < 0:
        raise PreconditionError(f"Horizon must be nonnegative, got {T}.")
    if not g.interior[u0]:
        raise PreconditionError(f"Start vertex {u0} is not an interior vertex.")

"""Short-time scaling sweeps over a decreasing sequence of mesh sizes.

Each sweep row builds a window of the configured family at one ``h``, projects
``x`` and ``y`` onto it and evaluates a certified kernel quantity at time
``h**beta * t``. Windows are grown and rebuilt until the kernel certificate
fits inside them.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import constants
from .bounds import graph_regime_scale
from .errors import ConfigError, IsoradialHeatError, WindowTooSmallError
from .generators import generate
from .geometry import GeneratorSpec, IsoradialGraph, Point, combinatorial_distance, project
from .kernel import kernel_log_entry, log_event_probability, poisson_cutoff
from .operators import SparseGenerator, assemble_generator, compute_weights

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Rate function and regions
# ---------------------------------------------------------------------------


class RateFunction:
    """``v -> |v|^2 / 2`` and its infimum over straight paths into a region."""

    def __call__(self, v: Point | complex | Sequence[float]) -> float:
        p = Point.of(v)
        return 0.5 * (p.x * p.x + p.y * p.y)

    def path_infimum(self, x: Point, region: "Disk", T: float) -> float:
        """``inf_{u in U} |u - x|^2 / (2T)``, reached along the line joining x and u."""
        gap = region.distance_from(x)
        return self(Point(gap, 0.0)) / T


RATE = RateFunction()


def rate_function(v: Point | complex | Sequence[float]) -> float:
    return RATE(v)


@dataclass(frozen=True)
class Disk:
    """Open Euclidean disk."""

    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigError(f"Disk radius must be positive, got {self.radius}.")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.hypot(points[:, 0] - self.center.x, points[:, 1] - self.center.y) < self.radius

    def distance_from(self, x: Point) -> float:
        return max(x.distance_to(self.center) - self.radius, 0.0)

    def as_dict(self) -> dict[str, Any]:
        return {"type": "disk", "center": [self.center.x, self.center.y], "radius": self.radius}


# ---------------------------------------------------------------------------
# Sweep types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    regime: str
    graph: GeneratorSpec
    x: Point
    y: Point
    t: float
    beta: float
    h_sequence: tuple[float, ...]
    rel_tol: float = constants.DEFAULT_ENTRY_REL_TOL
    threshold: float = math.inf
    region: Disk | None = None
    horizon: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.regime not in constants.REGIMES:
            raise ConfigError(f"Unknown regime {self.regime!r}. Expected one of: {', '.join(constants.REGIMES)}.")
        if self.beta == 1:
            raise ConfigError(
                "beta = 1 is the critical case between the Euclidean and graph regimes "
                "and is not covered by either limit theorem; choose beta < 1 or beta > 1."
            )
        if self.regime in ("euclidean", "ldp") and not 0 < self.beta < 1:
            raise ConfigError(f"The {self.regime} regime needs 0 < beta < 1, got {self.beta}.")
        if self.regime == "graph" and not self.beta > 1:
            raise ConfigError(f"The graph regime needs beta > 1, got {self.beta}.")
        if not self.t > 0:
            raise ConfigError(f"t must be positive, got {self.t}.")
        if not self.h_sequence:
            raise ConfigError("h_sequence must not be empty.")
        if any(not 0 < h < 1 for h in self.h_sequence):
            raise ConfigError("Every h in h_sequence must lie in (0, 1).")
        if any(b >= a for a, b in zip(self.h_sequence, self.h_sequence[1:])):
            raise ConfigError("h_sequence must be strictly decreasing.")
        if not self.rel_tol > 0:
            raise ConfigError(f"rel_tol must be positive, got {self.rel_tol}.")
        if self.regime == "ldp" and self.region is None:
            raise ConfigError("The ldp regime needs a region.")
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}.")

    def as_dict(self) -> dict[str, Any]:
        return {
            "regime": self.regime,
            "graph": self.graph.to_dict(),
            "x": [self.x.x, self.x.y],
            "y": [self.y.x, self.y.y],
            "t": self.t,
            "beta": self.beta,
            "h_sequence": list(self.h_sequence),
            "rel_tol": self.rel_tol,
            "threshold": _json_float(self.threshold),
            "region": None if self.region is None else self.region.as_dict(),
            "horizon": self.horizon,
        }


@dataclass(frozen=True)
class SweepRow:
    h: float
    distance: int
    hd: float
    log_kernel: float
    scaled: float
    target: float
    gap: float
    error_bound: float
    flagged: bool
    extent: int
    steps: int
    l1_limit: float | None = None
    note: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "h": self.h,
            "distance": self.distance,
            "hd": _json_float(self.hd),
            "log_kernel": _json_float(self.log_kernel),
            "scaled": _json_float(self.scaled),
            "target": _json_float(self.target),
            "gap": _json_float(self.gap),
            "error_bound": _json_float(self.error_bound),
            "flagged": self.flagged,
            "extent": self.extent,
            "steps": self.steps,
            "l1_limit": self.l1_limit,
            "note": self.note,
        }


CSV_COLUMNS = (
    "h",
    "distance",
    "hd",
    "log_kernel",
    "scaled",
    "target",
    "gap",
    "error_bound",
    "flagged",
    "extent",
    "steps",
    "l1_limit",
    "note",
)


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    rows: tuple[SweepRow, ...]
    verdict: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdict", verdict(self.rows, self.config.threshold))

    @property
    def flagged(self) -> list[SweepRow]:
        return [row for row in self.rows if row.flagged]

    @property
    def gaps(self) -> np.ndarray:
        return np.array([row.gap for row in self.rows])

    def as_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.as_dict(),
            "verdict": self.verdict,
            "rows": [row.as_dict() for row in self.rows],
        }

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([_csv_cell(getattr(row, name)) for name in CSV_COLUMNS])
        return path

    def write_json(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_plot_data(self, path: Path) -> Path:
        """Whitespace-separated ``h value target`` columns."""
        path = Path(path)
        lines = ["# h scaled target"]
        lines += [f"{row.h!r} {row.scaled!r} {row.target!r}" for row in self.rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def verdict(rows: Sequence[SweepRow], threshold: float) -> str:
    """``converging`` iff |gap| is nonincreasing over the last three rows and the final one is below ``threshold``."""
    tail = list(rows)[-3:]
    if not tail or any(row.flagged or not math.isfinite(row.gap) for row in tail):
        return "inconclusive"
    gaps = [abs(row.gap) for row in tail]
    trending = all(b <= a for a, b in zip(gaps, gaps[1:]))
    return "converging" if trending and gaps[-1] < threshold else "inconclusive"


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def euclidean_sweep(cfg: SweepConfig) -> SweepResult:
    if cfg.regime != "euclidean":
        cfg = replace(cfg, regime="euclidean")
    target = -(cfg.x.distance_to(cfg.y) ** 2) / (2.0 * cfg.t)

    def row(h: float) -> SweepRow:
        return _entry_row(cfg, h, scale=h**cfg.beta, target=lambda hd: target)

    return SweepResult(cfg, _run_rows(cfg, row))


def graph_sweep(cfg: SweepConfig) -> SweepResult:
    if cfg.regime != "graph":
        cfg = replace(cfg, regime="graph")

    def row(h: float) -> SweepRow:
        return _entry_row(cfg, h, scale=graph_regime_scale(h, cfg.beta), target=lambda hd: hd)

    return SweepResult(cfg, _run_rows(cfg, row))


def ldp_sweep(cfg: SweepConfig, region: Disk | None = None, T: float | None = None) -> SweepResult:
    region = region if region is not None else cfg.region
    T = T if T is not None else (cfg.horizon if cfg.horizon is not None else cfg.t)
    cfg = replace(cfg, regime="ldp", region=region, horizon=T)
    target = -RATE.path_infimum(cfg.x, region, T)

    def row(h: float) -> SweepRow:
        return _event_row(cfg, h, region, T, target)

    return SweepResult(cfg, _run_rows(cfg, row))


def run_sweep(cfg: SweepConfig) -> SweepResult:
    if cfg.regime == "euclidean":
        return euclidean_sweep(cfg)
    if cfg.regime == "graph":
        return graph_sweep(cfg)
    return ldp_sweep(cfg)


def _run_rows(cfg: SweepConfig, row: Callable[[float], SweepRow]) -> tuple[SweepRow, ...]:
    if cfg.workers > 1 and len(cfg.h_sequence) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = tuple(pool.map(row, cfg.h_sequence))
    else:
        rows = tuple(row(h) for h in cfg.h_sequence)
    for r in rows:
        if r.flagged:
            logger.warning("Row h=%.6g flagged: error %.3g on scaled value %.6g %s", r.h, r.error_bound, r.scaled, r.note)
    return rows


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Window:
    graph: IsoradialGraph
    generator: SparseGenerator
    extent: int
    u: int
    v: int


def _entry_row(cfg: SweepConfig, h: float, *, scale: float, target: Callable[[float], float]) -> SweepRow:
    time = h**cfg.beta * cfg.t

    def radius(gen: SparseGenerator, d_est: int) -> int:
        mean = gen.rate * time
        return int(max(stats.poisson.isf(1e-16, mean), 2 * d_est)) + constants.WINDOW_MARGIN

    def evaluate(window: _Window) -> tuple[float, float, int]:
        entry = kernel_log_entry(window.generator, window.u, window.v, time, cfg.rel_tol)
        return entry.log_value, entry.log_error_bound, entry.steps_used

    return _row(cfg, h, scale, target, radius, evaluate, on_diagonal=cfg.x == cfg.y)


def _event_row(cfg: SweepConfig, h: float, region: Disk, T: float, target: float) -> SweepRow:
    time = h**cfg.beta * T
    tol = constants.DEFAULT_ROW_TOL

    def radius(gen: SparseGenerator, d_est: int) -> int:
        return poisson_cutoff(gen.rate * time, math.log(tol / 2.0)) + constants.WINDOW_MARGIN

    def evaluate(window: _Window) -> tuple[float, float, int]:
        log_value, additive = log_event_probability(window.generator, window.graph, window.u, time, region, tol)
        relative = additive * math.exp(-log_value) if math.isfinite(log_value) else math.inf
        steps = _row_steps(window.generator, time, tol)
        return log_value, math.log1p(relative) if relative < 1 else math.inf, steps

    return _row(cfg, h, h**cfg.beta, lambda hd: target, radius, evaluate)


def _row_steps(gen: SparseGenerator, t: float, tol: float = constants.DEFAULT_ROW_TOL) -> int:
    return poisson_cutoff(gen.rate * t, math.log(tol / 2.0))


def _row(
    cfg: SweepConfig,
    h: float,
    scale: float,
    target: Callable[[float], float],
    radius: Callable[[SparseGenerator, int], int],
    evaluate: Callable[[_Window], tuple[float, float, int]],
    on_diagonal: bool = False,
) -> SweepRow:
    """One certified sweep row.

    For ``x == y`` the scaled value is pinned to its limit: the on-diagonal
    entry tends to a constant, so both scaled quantities vanish with ``h``.
    ``log_kernel`` still carries the certified entry.
    """
    spec = cfg.graph.with_h(h)
    l1_limit = _l1_limit(cfg, spec)
    try:
        sizing = generate(spec.with_h(h, constants.SIZING_EXTENT))
        sizing_gen = assemble_generator(sizing, compute_weights(sizing))
        step = float(sizing.edge_lengths.min())
        d_est = int(math.ceil(constants.SPANNER_CONSTANT * cfg.x.distance_to(cfg.y) / step)) + 2
        need = radius(sizing_gen, d_est)
        offset = int(math.ceil(max(_norm(cfg.x), _norm(cfg.y)) / (0.5 * step)))
        extent = need + offset
    except IsoradialHeatError as exc:
        return _failed_row(h, 0, str(exc), l1_limit)

    for attempt in range(constants.MAX_WINDOW_ATTEMPTS):
        try:
            window = _build_window(spec, cfg, extent)
            available = float(window.graph.boundary_distance[window.u])
            if available <= need:
                raise WindowTooSmallError(source=window.u, required_radius=need + 1, available_radius=available)
            log_value, log_error, steps = evaluate(window)
        except WindowTooSmallError as exc:
            deficit = exc.required_radius - exc.available_radius
            grow = int(math.ceil(deficit)) if math.isfinite(deficit) else need
            extent += max(grow, 1) + constants.WINDOW_MARGIN
            need = max(need, exc.required_radius)
            logger.info("h=%.6g window too small (attempt %d); growing extent to %d", h, attempt + 1, extent)
            continue
        except IsoradialHeatError as exc:
            return _failed_row(h, extent, str(exc), l1_limit)

        d = combinatorial_distance(window.graph, window.u, window.v)
        hd = h * d
        tgt = target(hd)
        if on_diagonal:
            scaled, error, flagged = tgt, 0.0, False
        else:
            scaled = scale * log_value
            error = abs(scale) * log_error
            flagged = not math.isfinite(scaled) or error > constants.FLAG_FRACTION * abs(scaled)
        logger.info("h=%.6g d=%d extent=%d K=%d scaled=%.6g target=%.6g", h, d, extent, steps, scaled, tgt)
        return SweepRow(
            h=h,
            distance=d,
            hd=hd,
            log_kernel=log_value,
            scaled=scaled,
            target=tgt,
            gap=scaled - tgt,
            error_bound=error,
            flagged=flagged,
            extent=extent,
            steps=steps,
            l1_limit=l1_limit,
            note="on-diagonal" if on_diagonal else "",
        )
    return _failed_row(h, extent, f"window still too small after {constants.MAX_WINDOW_ATTEMPTS} attempts", l1_limit)


def _build_window(spec: GeneratorSpec, cfg: SweepConfig, extent: int) -> _Window:
    g = generate(spec.with_h(spec.h, extent))
    gen = assemble_generator(g, compute_weights(g), "variable-speed")
    return _Window(graph=g, generator=gen, extent=extent, u=project(g, cfg.x), v=project(g, cfg.y))


def _failed_row(h: float, extent: int, note: str, l1_limit: float | None) -> SweepRow:
    logger.warning("Row h=%.6g failed: %s", h, note)
    nan = math.nan
    return SweepRow(
        h=h,
        distance=-1,
        hd=nan,
        log_kernel=nan,
        scaled=nan,
        target=nan,
        gap=nan,
        error_bound=nan,
        flagged=True,
        extent=extent,
        steps=0,
        l1_limit=l1_limit,
        note=note,
    )


def _l1_limit(cfg: SweepConfig, spec: GeneratorSpec) -> float | None:
    # h * d^c on a square lattice is the l1 distance in units of h / spacing.
    if spec.family != "square":
        return None
    factor = 1.0 if spec.spacing == "spacing" else math.sqrt(2.0)
    return factor * (abs(cfg.x.x - cfg.y.x) + abs(cfg.x.y - cfg.y.y))


def _norm(p: Point) -> float:
    return math.hypot(p.x, p.y)


def _json_float(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)

"""Command-line entry point: ``isoradial-heat generate|sweep|check``.

Exit codes: 0 pass, 1 usage or configuration error, 2 invariant failure,
3 certificate failure (flagged sweep rows, windows too small).
"""

from __future__ import annotations

import logging
import math
import sys
from pathlib import Path
from typing import Callable, Optional

import click
import numpy as np
import typer
from dotenv import load_dotenv

from . import constants
from .bounds import metzger_sandwich
from .config import RunConfig, load_config, read_config_text, settings_from_env
from .errors import (
    BoundaryHitError,
    ConfigError,
    GraphFileError,
    IsoradialHeatError,
    WindowTooSmallError,
)
from .generators import generate
from .geometry import IsoradialGraph, bfs_distances, check_assumptions, dual_cell_areas, validate_isoradial
from .graph_io import load_graph, write_graph
from .kernel import kernel_moments, kernel_row, poisson_cutoff
from .operators import WeightSet, assemble_generator, compute_weights, laplacian_matrix, weight_bound_margins
from .regimes import run_sweep
from .reports import CheckResult, RunManifest, config_digest, write_check_report, write_json
from .walk import empirical_moments

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, help="Isoradial graphs, heat kernels and short-time regime sweeps.")

ConfigOption = typer.Option(..., "--config", exists=False, dir_okay=False, help="YAML run configuration.")
OutDirOption = typer.Option(Path("out"), "--out-dir", file_okay=False, help="Directory for outputs.")
ThreadsOption = typer.Option(None, "--threads", min=1, help="Worker threads (env ISORADIAL_HEAT_THREADS).")
SeedOption = typer.Option(None, "--seed-override", min=0, help="Replace the config seed.")
TolOption = typer.Option(None, "--tol", min=0.0, help="Relative kernel tolerance (env ISORADIAL_HEAT_TOL).")
LogLevelOption = typer.Option(None, "--log-level", help="Logging level (env ISORADIAL_HEAT_LOG_LEVEL).")

CHECK_TIMES = (1.0, 0.5, 0.1, 0.01)
QUADRATIC_SAMPLES = 100
QUADRATIC_TOL = 1e-9
DUAL_AREA_TOL = 1e-9


@app.command("generate")
def cmd_generate(
    config: Path = ConfigOption,
    out_dir: Path = OutDirOption,
    seed_override: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    log_level: Optional[str] = LogLevelOption,
) -> int:
    """Build the configured window, write it as JSON and validate it."""
    _configure_logging(log_level)

    def run(manifest: RunManifest, run_config: RunConfig) -> int:
        g = generate(run_config.graph.to_spec())
        report = validate_isoradial(g, tol)
        assumptions = check_assumptions(g, seed=manifest.seed)
        weights = compute_weights(g)
        manifest.add_output(write_graph(g, out_dir / "graph.json"))
        report.write_csv(out_dir / "validation.csv")
        manifest.add_output(out_dir / "validation.csv")
        summary = {
            "passed": report.passed,
            "max_deviation": report.max_deviation,
            "n_vertices": g.n_vertices,
            "n_interior": int(g.interior.sum()),
            "assumptions": assumptions.as_dict(),
            "weights": weights.consts.as_dict(),
        }
        manifest.add_output(write_json(summary, out_dir / "summary.json"))
        manifest.record_bound("face_deviation", report.max_deviation)
        if not report.passed:
            typer.echo(f"Validation failed on {len(report.failing_faces())} faces.", err=True)
            return constants.EXIT_INVARIANT
        return constants.EXIT_OK

    return _with_config("generate", config, out_dir, seed_override, run)


@app.command("sweep")
def cmd_sweep(
    config: Path = ConfigOption,
    out_dir: Path = OutDirOption,
    threads: Optional[int] = ThreadsOption,
    seed_override: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    log_level: Optional[str] = LogLevelOption,
) -> int:
    """Run the configured regime sweep; the exit code encodes the verdict."""
    _configure_logging(log_level)
    settings = settings_from_env()

    def run(manifest: RunManifest, run_config: RunConfig) -> int:
        if run_config.kind != "sweep":
            raise ConfigError(f"{config} has kind {run_config.kind!r}; the sweep command needs kind 'sweep'.")
        cfg = run_config.sweep_config(workers=threads or settings.threads, rel_tol=tol or settings.tol)
        result = run_sweep(cfg)
        for path in (
            result.write_csv(out_dir / "sweep.csv"),
            result.write_json(out_dir / "sweep.json"),
            result.write_plot_data(out_dir / "sweep_plot.dat"),
        ):
            manifest.add_output(path)
        for row in result.rows:
            manifest.record_bound("scaled_log_kernel", row.error_bound)
        typer.echo(f"{cfg.regime} sweep: {result.verdict}")
        if result.flagged:
            return constants.EXIT_CERTIFICATE
        return constants.EXIT_OK if result.verdict == "converging" else constants.EXIT_INVARIANT

    return _with_config("sweep", config, out_dir, seed_override, run)


@app.command("check")
def cmd_check(
    graph_file: Path = typer.Argument(..., dir_okay=False, help="Graph JSON written by 'generate'."),
    out_dir: Path = OutDirOption,
    threads: Optional[int] = ThreadsOption,
    seed_override: Optional[int] = SeedOption,
    tol: Optional[float] = TolOption,
    log_level: Optional[str] = LogLevelOption,
    walk_samples: int = typer.Option(0, "--walk-samples", min=0, help="Monte Carlo trajectories (0 skips)."),
) -> int:
    """Run the invariant suite on a graph file and write a pass/fail report."""
    _configure_logging(log_level)
    settings = settings_from_env()
    seed = seed_override if seed_override is not None else 0
    manifest = RunManifest(command="check", config_digest=_file_digest(graph_file), seed=seed)

    def run() -> int:
        g = load_graph(graph_file)
        out_dir.mkdir(parents=True, exist_ok=True)
        results = invariant_suite(
            g,
            seed=seed,
            rel_tol=tol or settings.tol or constants.DEFAULT_ENTRY_REL_TOL,
            walk_samples=walk_samples,
            workers=threads or settings.threads,
        )
        manifest.add_output(write_check_report(results, out_dir / "check.csv"))
        for result in results:
            status = "pass" if result.passed else "FAIL"
            typer.echo(f"{status:4} {result.name:28} margin={result.margin:.3e} {result.detail}")
        return constants.EXIT_OK if all(r.passed for r in results) else constants.EXIT_INVARIANT

    code = _guarded(run)
    manifest.exit_code = code
    if out_dir.is_dir():
        manifest.write(out_dir)
    return code


def invariant_suite(
    g: IsoradialGraph,
    *,
    seed: int = 0,
    rel_tol: float = constants.DEFAULT_ENTRY_REL_TOL,
    walk_samples: int = 0,
    workers: int = 1,
) -> list[CheckResult]:
    results: list[CheckResult] = []
    report = validate_isoradial(g)
    results.append(
        CheckResult("isoradial_faces", report.passed, report.tol - report.max_deviation, f"faces={len(g.faces)}")
    )

    w = compute_weights(g)
    # Bounds are judged against a fresh window from the recorded generator.
    reference = compute_weights(generate(g.spec)).consts if g.spec is not None else None
    source = "generator" if reference is not None else "measured"
    closed = np.isfinite(w.omega)
    for name, margin in weight_bound_margins(g, w, reference).items():
        results.append(CheckResult(f"weight_bound.{name}", margin >= 0, margin, f"constants={source}"))
    results.append(_dual_areas(g))
    omega = w.omega[closed]
    results.append(
        CheckResult("omega_range", True, 0.0, f"min={omega.min():.12g} max={omega.max():.12g}")
    )

    assumptions = check_assumptions(g, seed=seed)
    results.append(
        CheckResult(
            "spanner_constant",
            assumptions.kappa_empirical <= constants.SPANNER_CONSTANT,
            constants.SPANNER_CONSTANT - assumptions.kappa_empirical,
            f"kappa={assumptions.kappa_empirical:.12g} pairs={assumptions.pairs_checked}",
        )
    )

    results.append(_quadratic_identity(g, w, seed))

    gen = assemble_generator(g, w, "variable-speed")
    center = int(np.argmax(np.where(g.interior, g.boundary_distance, -1)))
    t = _fitting_time(gen.rate, float(g.boundary_distance[center]))
    if t is None:
        results.append(CheckResult("kernel_row_mass", False, -1.0, "window too small for any check time"))
        return results

    row = kernel_row(gen, center, t)
    mass = row.total_mass()
    low = 1.0 - row.leaked_mass_bound - 1e-12
    results.append(
        CheckResult("kernel_row_mass", low <= mass <= 1.0 + 1e-12, min(mass - low, 1.0 + 1e-12 - mass), f"t={t}")
    )

    moments = kernel_moments(gen, g, center, t)
    allowance = moments.second_error_bound + 1e-9 * max(t, 1.0) * g.h**2
    worst = max(
        abs(moments.mean.x),
        abs(moments.mean.y),
        abs(moments.second_re - t),
        abs(moments.second_im - t),
        abs(moments.cross),
    )
    results.append(CheckResult("kernel_moments", worst <= allowance, allowance - worst, f"t={t}"))

    dist = bfs_distances(g, center, limit=3)
    targets = [int(v) for v in np.flatnonzero(np.isfinite(dist)) if v != center]
    sandwich = metzger_sandwich(gen, g, w, [center], targets, t, rel_tol)
    margin = min((r.margin for r in sandwich), default=0.0)
    results.append(
        CheckResult("metzger_sandwich", all(r.holds for r in sandwich), margin, f"pairs={len(sandwich)} t={t}")
    )

    if walk_samples:
        stats = empirical_moments(g, w, center, t, walk_samples, seed, workers)
        z = max(abs(stats.mean.x) / stats.mean_se.x, abs(stats.mean.y) / stats.mean_se.y)
        results.append(CheckResult("walk_mean", z <= 4.0, 4.0 - z, f"samples={walk_samples}"))
    return results


def _quadratic_identity(g: IsoradialGraph, w: WeightSet, seed: int) -> CheckResult:
    # Delta_h (a x^2 + b x y + c y^2) = 2 (a + c) at every interior vertex.
    rng = np.random.default_rng(seed)
    lap = laplacian_matrix(g, w)
    inner = np.flatnonzero(g.interior)
    x = (g.positions[:, 0] - g.positions[:, 0].mean()) / g.h
    y = (g.positions[:, 1] - g.positions[:, 1].mean()) / g.h
    worst = 0.0
    for a, b, c in rng.uniform(-1.0, 1.0, size=(QUADRATIC_SAMPLES, 3)):
        f = a * x * x + b * x * y + c * y * y
        expected = 2.0 * (a + c) / g.h**2
        got = (lap @ f)[inner]
        worst = max(worst, float(np.max(np.abs(got - expected))) / max(abs(expected), 1.0 / g.h**2))
    return CheckResult("quadratic_identity", worst <= QUADRATIC_TOL, QUADRATIC_TOL - worst, f"samples={QUADRATIC_SAMPLES}")


def _dual_areas(g: IsoradialGraph) -> CheckResult:
    # Stored areas must match the circumcenter polygons they stand for.
    if len(g.faces) == 0:
        return CheckResult("dual_areas", True, 0.0, "no faces")
    inner = np.flatnonzero(g.interior)
    cells = dual_cell_areas(g, inner)
    worst = float(np.max(np.abs(g.dual_areas[inner] - cells) / cells)) if len(inner) else 0.0
    return CheckResult("dual_areas", worst <= DUAL_AREA_TOL, DUAL_AREA_TOL - worst, f"vertices={len(inner)}")


def _fitting_time(rate: float, radius: float) -> float | None:
    for t in CHECK_TIMES:
        if poisson_cutoff(rate * t, math.log(constants.DEFAULT_ROW_TOL / 2.0)) < radius:
            return t
    return None


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------


def _with_config(
    command: str,
    config: Path,
    out_dir: Path,
    seed_override: Optional[int],
    run: Callable[[RunManifest, RunConfig], int],
) -> int:
    manifest: RunManifest | None = None

    def body() -> int:
        nonlocal manifest
        text = read_config_text(config)
        run_config = load_config(config)
        seed = run_config.seed if seed_override is None else seed_override
        manifest = RunManifest(command=command, config_digest=config_digest(text), seed=seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        return run(manifest, run_config)

    code = _guarded(body)
    if manifest is not None and out_dir.is_dir():
        manifest.exit_code = code
        manifest.write(out_dir)
    return code


def _guarded(body: Callable[[], int]) -> int:
    try:
        return body()
    except (ConfigError, GraphFileError) as exc:
        typer.echo(exc.to_json(), err=True)
        return constants.EXIT_USAGE
    except (WindowTooSmallError, BoundaryHitError) as exc:
        typer.echo(exc.to_json(), err=True)
        return constants.EXIT_CERTIFICATE
    except IsoradialHeatError as exc:
        typer.echo(exc.to_json(), err=True)
        return constants.EXIT_INVARIANT


def _file_digest(path: Path) -> str:
    try:
        return config_digest(Path(path).read_text(encoding="utf-8"))
    except OSError:
        return ""


def _configure_logging(level: Optional[str]) -> None:
    name = (level or settings_from_env().log_level).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level {name!r}.")
    logging.basicConfig(
        level=numeric,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: list[str] | None = None) -> None:
    load_dotenv()
    try:
        result = app(args=argv, prog_name="isoradial-heat", standalone_mode=False)
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        raise SystemExit(constants.EXIT_USAGE) from exc
    except click.exceptions.Abort as exc:
        raise SystemExit(constants.EXIT_USAGE) from exc
    except ConfigError as exc:
        print(exc.to_json(), file=sys.stderr)
        raise SystemExit(constants.EXIT_USAGE) from exc
    raise SystemExit(result if isinstance(result, int) else constants.EXIT_OK)

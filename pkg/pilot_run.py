"""Pilot run of the full acceptance sweeps and the Monte Carlo moment check.

Runs every shipped demo sweep at its full h range, prints the gaps, and
suggests a threshold for each (the final |gap| with a 1% margin, rounded up to
two decimals) next to the one pinned in the shipped config. Then samples the
walk block of square.yaml and compares the empirical second moments with the
Brownian value within 3 standard errors.

Slow: the finest sweep rows build windows with tens of thousands of vertices.

  1. euclidean_demo.yaml   h^beta log p  -> -|x - y|^2 / (2t)
  2. graph_demo.yaml       scaled log p  -> h d^c
  3. ldp_demo.yaml         h^beta log P(X in U) -> -inf I
  4. square.yaml walk      E[X_re^2], E[X_im^2] -> T
"""

import math
import os
import time

from dotenv import load_dotenv
load_dotenv()

from isoradial_heat import constants
from isoradial_heat.config import load_shipped_config
from isoradial_heat.generators import generate
from isoradial_heat.geometry import project
from isoradial_heat.operators import compute_weights
from isoradial_heat.regimes import run_sweep
from isoradial_heat.walk import empirical_moments

THREADS = int(os.getenv(constants.ENV_THREADS) or 1)

results: list[tuple[str, str, str]] = []  # (step, status, detail)


def run_step(name: str, fn):
    """Run one pilot step and record the result."""
    started = time.perf_counter()
    try:
        result = fn()
        elapsed = time.perf_counter() - started
        results.append((name, "PASS", f"{elapsed:.1f}s"))
        print(f"  PASS  {name} ({elapsed:.1f}s)")
        return result
    except Exception as exc:
        results.append((name, "FAIL", str(exc)[:300]))
        print(f"  FAIL  {name}: {exc!s:.200}")
        return None


def suggested_threshold(final_gap: float) -> float:
    return math.ceil(abs(final_gap) * 1.01 * 100) / 100


def sweep(name: str) -> None:
    run_config = load_shipped_config(name)
    cfg = run_config.sweep_config(workers=THREADS)
    result = run_sweep(cfg)
    print(f"         {'h':>8} {'d':>6} {'scaled':>12} {'target':>12} {'gap':>12} {'error':>10}")
    for row in result.rows:
        flag = "  FLAGGED" if row.flagged else ""
        print(
            f"         {row.h:8.4g} {row.distance:6d} {row.scaled:12.6g} {row.target:12.6g} "
            f"{row.gap:12.6g} {row.error_bound:10.3g}{flag}"
        )
    final = result.rows[-1].gap
    print(f"         verdict={result.verdict} pinned threshold={cfg.threshold} suggested={suggested_threshold(final)}")
    if result.flagged:
        raise RuntimeError(f"{len(result.flagged)} flagged rows")
    if result.verdict != "converging":
        raise RuntimeError(f"verdict {result.verdict} with the pinned threshold")


def walk_moments() -> None:
    run_config = load_shipped_config("square.yaml")
    g = generate(run_config.graph.to_spec())
    w = compute_weights(g)
    walk = run_config.walk
    u = project(g, walk.start)
    m = empirical_moments(g, w, u, walk.horizon, walk.samples, run_config.seed, THREADS)
    z_re = abs(m.var_re - walk.horizon) / m.var_re_se
    z_im = abs(m.var_im - walk.horizon) / m.var_im_se
    print(f"         var_re={m.var_re:.5f} (z={z_re:.2f}) var_im={m.var_im:.5f} (z={z_im:.2f}) n={m.n_samples}")
    if max(z_re, z_im) > 3.0:
        raise RuntimeError("second moment outside 3 standard errors")


print(f"\nPilot run: isoradial-heat, {THREADS} thread(s)")
print("=" * 60)

for i, name in enumerate(("euclidean_demo.yaml", "graph_demo.yaml", "ldp_demo.yaml"), start=1):
    print(f"\n[{i}/4] {name}")
    run_step(name, lambda: sweep(name))

print("\n[4/4] square.yaml walk moments")
run_step("walk_moments", walk_moments)

print("\n" + "=" * 60)
for name, status, detail in results:
    print(f"  {status:5} {name:24} {detail}")
failed = [r for r in results if r[1] != "PASS"]
print(f"\n{len(results) - len(failed)}/{len(results)} passed")
raise SystemExit(1 if failed else 0)

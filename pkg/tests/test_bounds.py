import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy import linalg

from isoradial_heat import bounds
from isoradial_heat.errors import FeasibilityError, PreconditionError
from isoradial_heat.geometry import bfs_distances, combinatorial_ball
from isoradial_heat.kernel import kernel_log_entry
from isoradial_heat.operators import assemble_generator, compute_weights

from tests.graph_fixtures import (
    center,
    path_graph,
    rhombic_graph,
    square_graph,
    triangular_graph,
    uneven_rhombic_graph,
    vertex_at,
)


def _walk_log_products(g, w, x: int, y: int, n_max: int) -> dict[int, float]:
    # Every walk of length <= n_max from x, scored by its sum of log mu.
    best: dict[int, float] = {}

    def extend(v: int, length: int, total: float) -> None:
        if length and v == y:
            best[length] = max(best.get(length, -math.inf), total)
        if length == n_max:
            return
        for k in range(g.indptr[v], g.indptr[v + 1]):
            if np.isfinite(w.mu[k]):
                extend(int(g.indices[k]), length + 1, total + math.log(w.mu[k]))

    extend(x, 0, 0.0)
    return best


def _dense_poincare(g, w, u: int, n: int) -> float:
    # Edge by edge, with constants removed by projection instead of a shift.
    dist = bfs_distances(g, u, limit=2 * n)
    big = [int(v) for v in np.flatnonzero(dist <= 2 * n)]
    pos = {v: i for i, v in enumerate(big)}
    size = len(big)
    energy = np.zeros((size, size))
    for i, v in enumerate(big):
        for k in range(g.indptr[v], g.indptr[v + 1]):
            j = pos.get(int(g.indices[k]))
            if j is None:
                continue
            omega = w.omega[g.slot_edge[k]]
            energy[i, i] += omega
            energy[j, j] += omega
            energy[i, j] -= omega
            energy[j, i] -= omega
    energy *= n * n
    m = np.array([w.m[v] if dist[v] <= n else 0.0 for v in big])
    variance = np.diag(m) - np.outer(m, m) / m.sum()
    basis = linalg.null_space(np.ones((1, size)))
    return float(linalg.eigh(basis.T @ variance @ basis, basis.T @ energy @ basis, eigvals_only=True)[-1])


class PathProductBoundTests(unittest.TestCase):
    def test_sandwich_holds_on_the_square_lattice(self) -> None:
        g = square_graph(extent=20)
        w = compute_weights(g)
        gen = assemble_generator(g, w)
        u = center(g)
        targets = [int(v) for v in combinatorial_ball(g, u, 4)]
        for t in (0.1, 1.0):
            rows = bounds.metzger_sandwich(gen, g, w, [u], targets, t)
            self.assertEqual(len(rows), len(targets) - 1)
            for row in rows:
                self.assertTrue(row.holds, msg=row)
                self.assertLess(row.lower, row.upper)

    def test_sandwich_holds_on_the_triangular_lattice(self) -> None:
        g = triangular_graph(extent=20)
        w = compute_weights(g)
        gen = assemble_generator(g, w)
        u = center(g)
        targets = [int(v) for v in combinatorial_ball(g, u, 3)]
        rows = bounds.metzger_sandwich(gen, g, w, [u], targets, 0.5)
        self.assertTrue(all(row.holds for row in rows))

    def test_bounds_accept_points_and_report_paths(self) -> None:
        g = square_graph(extent=12)
        w = compute_weights(g)
        bound = bounds.metzger_bounds(g, w, (0.1, -0.2), (3.0, 1.0), 1.0)
        self.assertEqual(bound.distance, 4)
        self.assertEqual(bound.upper_path_length, 4)
        self.assertGreaterEqual(bound.lower_path_length, 4)
        self.assertTrue(bound.cutoff_certified)

    def test_path_products_match_walk_enumeration(self) -> None:
        cases = []
        g = path_graph()
        cases += [(g, 0, 2), (g, 1, 1), (g, 0, 1)]
        for g in (square_graph(extent=3), uneven_rhombic_graph(extent=4)):
            u = center(g)
            near = [int(v) for v in g.neighbors(u)]
            cases += [(g, u, near[0]), (g, u, u), (g, near[0], near[-1])]
        for g, x, y in cases:
            w = compute_weights(g)
            expected = _walk_log_products(g, w, x, y, 6)
            lengths, values = bounds.path_log_products(g, w, x, y, 1, 6)
            self.assertEqual([int(n) for n in lengths], sorted(expected), msg=(x, y))
            np.testing.assert_allclose(values, [expected[int(n)] for n in lengths], rtol=0, atol=1e-12)

    def test_path_products_respect_the_lower_length(self) -> None:
        g = path_graph()
        w = compute_weights(g)
        lengths, _ = bounds.path_log_products(g, w, 0, 2, 3, 6)
        self.assertEqual(list(lengths), [4.0, 6.0])

    def test_sandwich_csv(self) -> None:
        g = square_graph(extent=10)
        w = compute_weights(g)
        u = center(g)
        rows = bounds.metzger_sandwich(assemble_generator(g, w), g, w, [u], [vertex_at(g, 1, 0)], 0.5)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "sandwich.csv"
            bounds.write_sandwich_csv(rows, path)
            lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "pair,t,lower,exact,upper,margin")
        self.assertTrue(lines[1].startswith(f"{u}-{vertex_at(g, 1, 0)},0.5,"))

    def test_preconditions(self) -> None:
        g = square_graph(extent=8)
        w = compute_weights(g)
        u = center(g)
        with self.assertRaises(PreconditionError):
            bounds.metzger_bounds(g, w, u, u, 1.0)
        with self.assertRaises(PreconditionError):
            bounds.metzger_bounds(g, w, u, vertex_at(g, 2, 1), 0.0)
        with self.assertRaises(PreconditionError):
            bounds.metzger_bounds(g, w, u, vertex_at(g, 2, 1), 1.0, n_max=1)


class ImprovedLowerBoundTests(unittest.TestCase):
    def test_improved_bound_is_below_the_kernel(self) -> None:
        g = square_graph(extent=12)
        w = compute_weights(g)
        gen = assemble_generator(g, w)
        u, v = center(g), vertex_at(g, 3, 0)
        lower = bounds.improved_lower_bound(g, w, u, v, 0.1, 1.0, 2.0)
        exact = kernel_log_entry(gen, u, v, 0.1)
        self.assertLessEqual(lower, exact.log_value)

    def test_improved_bound_needs_distance_beyond_the_time_scale(self) -> None:
        g = square_graph(extent=12)
        w = compute_weights(g)
        with self.assertRaises(PreconditionError):
            bounds.improved_lower_bound(g, w, center(g), vertex_at(g, 3, 0), 5.0, 1.0, 2.0)

    def test_improved_bound_sits_below_the_path_product_lower_bound(self) -> None:
        for h, beta, t in ((1.0, 2.0, 0.1), (0.5, 3.0, 0.4), (0.5, 2.5, 0.2)):
            g = square_graph(h=h, extent=12)
            w = compute_weights(g)
            u, v = center(g), vertex_at(g, 3 * h, h)
            improved = bounds.improved_lower_bound(g, w, u, v, t, h, beta)
            path = bounds.metzger_bounds(g, w, u, v, h**beta * t)
            self.assertLessEqual(improved, path.lower + 1e-12, msg=(h, beta))

    def test_graph_regime_rate_tends_to_h_times_distance(self) -> None:
        consts = compute_weights(square_graph(extent=3)).consts
        rate = bounds.graph_regime_rate(10**8, 1e-8, 2.0, 1.0, consts)
        self.assertAlmostEqual(rate, 1.0, places=6)

    def test_graph_regime_scale(self) -> None:
        self.assertAlmostEqual(bounds.graph_regime_scale(0.5, 2.0), 0.5 / math.log(0.5), places=15)
        with self.assertRaises(PreconditionError):
            bounds.graph_regime_scale(0.5, 1.0)
        with self.assertRaises(PreconditionError):
            bounds.graph_regime_scale(1.5, 2.0)


class VolumeTests(unittest.TestCase):
    def test_square_lattice_ball_volume(self) -> None:
        g = square_graph(extent=6)
        w = compute_weights(g)
        u = center(g)
        self.assertAlmostEqual(bounds.volume(g, w, u, 2), 52.0, places=12)
        np.testing.assert_allclose(bounds.volume_profile(g, w, u, [0, 1, 2]), [4.0, 20.0, 52.0])
        self.assertLessEqual(bounds.ball_area(g, u, 2), math.pi * g.circumdiameter**2 * 9)

    def test_volume_growth_is_quadratic(self) -> None:
        g = square_graph(extent=55)
        slope = bounds.volume_growth_fit(g, compute_weights(g), center(g), (5, 50))
        self.assertGreater(slope, 1.9)
        self.assertLess(slope, 2.05)

    def test_growth_fit_range(self) -> None:
        g = square_graph(extent=6)
        with self.assertRaises(PreconditionError):
            bounds.volume_growth_fit(g, compute_weights(g), center(g), (3, 3))


class PoincareTests(unittest.TestCase):
    def test_dense_and_iterative_solvers_agree(self) -> None:
        g = square_graph(extent=8)
        w = compute_weights(g)
        u = center(g)
        dense = bounds.poincare_constant(g, w, u, 2, method="dense")
        iterative = bounds.poincare_constant(g, w, u, 2, method="iterative")
        self.assertGreater(dense, 0)
        self.assertAlmostEqual(iterative / dense, 1.0, delta=1e-4)

    def test_constants_stay_in_a_band(self) -> None:
        g = square_graph(extent=14)
        w = compute_weights(g)
        u = center(g)
        values = [bounds.poincare_constant(g, w, u, n) for n in (2, 4, 6)]
        self.assertLess(max(values) / min(values), 4.0)
        self.assertEqual(bounds.poincare_constant(g, w, u, 0), 0.0)

    def test_first_ball_matches_an_independent_dense_solve(self) -> None:
        for g in (square_graph(extent=8), uneven_rhombic_graph(extent=10), triangular_graph(extent=8)):
            w = compute_weights(g)
            u = center(g)
            value = bounds.poincare_constant(g, w, u, 1, method="dense")
            self.assertAlmostEqual(value / _dense_poincare(g, w, u, 1), 1.0, delta=1e-8)

    def test_constants_do_not_depend_on_the_mesh_size(self) -> None:
        for build in (square_graph, rhombic_graph):
            values = []
            for h in (1.0, 0.5, 0.25):
                g = build(h=h, extent=12)
                values.append([bounds.poincare_constant(g, compute_weights(g), center(g), n) for n in (1, 2)])
            values = np.asarray(values)
            np.testing.assert_allclose(values, np.broadcast_to(values[0], values.shape), rtol=1e-9)
            self.assertTrue(np.all(values > 0))
            self.assertTrue(np.all(values < 5.0))

    def test_unknown_method(self) -> None:
        g = square_graph(extent=4)
        with self.assertRaises(ValueError):
            bounds.poincare_constant(g, compute_weights(g), center(g), 1, method="power")


class GaussianFitTests(unittest.TestCase):
    def setUp(self) -> None:
        self.g = square_graph(extent=25)
        self.w = compute_weights(self.g)
        self.gen = assemble_generator(self.g, self.w, "constant-speed")
        u = center(self.g)
        self.pairs = [(u, vertex_at(self.g, a, b)) for a, b in ((0, 0), (1, 0), (1, 1), (2, 0))]

    def test_fit_holds_on_its_samples(self) -> None:
        fit = bounds.gaussian_lower_fit(self.gen, self.g, self.w, self.pairs, [4.0, 9.0])
        self.assertEqual(len(fit.offsets), 8)
        self.assertGreater(fit.c_l, 0)
        self.assertGreater(fit.C_l, 0)
        self.assertTrue(fit.holds_on(fit.offsets, fit.spreads))

    def test_refit_on_a_finer_window_gives_the_same_constants(self) -> None:
        offsets = ((0, 0), (1, 0), (1, 1), (2, 0))
        fits = []
        for h, extent in ((1.0, 25), (0.5, 30)):
            g = square_graph(h=h, extent=extent)
            w = compute_weights(g)
            gen = assemble_generator(g, w, "constant-speed")
            u = center(g)
            pairs = [(u, vertex_at(g, a * h, b * h)) for a, b in offsets]
            fits.append(bounds.gaussian_lower_fit(gen, g, w, pairs, [4.0, 9.0]))
        coarse, fine = fits
        np.testing.assert_allclose(fine.offsets, coarse.offsets, rtol=0, atol=1e-9)
        self.assertEqual(fine.C_l, coarse.C_l)
        self.assertEqual(fine.c_l, coarse.c_l)
        self.assertTrue(coarse.holds_on(fine.offsets, fine.spreads))

    def test_infeasible_grid(self) -> None:
        with self.assertRaises(FeasibilityError):
            bounds.gaussian_lower_fit(self.gen, self.g, self.w, self.pairs, [4.0, 9.0], c_grid=[1e6])

    def test_times_below_distance_are_rejected(self) -> None:
        with self.assertRaises(PreconditionError):
            bounds.gaussian_samples(self.gen, self.g, self.w, self.pairs, [1.0])


if __name__ == "__main__":
    unittest.main()

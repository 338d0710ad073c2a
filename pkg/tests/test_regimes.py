import json
import math
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from isoradial_heat import constants, regimes
from isoradial_heat.errors import ConfigError, WindowTooSmallError
from isoradial_heat.geometry import GeneratorSpec, Point
from isoradial_heat.regimes import Disk, SweepConfig, SweepRow

SQUARE = GeneratorSpec(family="square", h=0.5, extent=10)


def _config(**overrides) -> SweepConfig:
    values = dict(
        regime="graph",
        graph=SQUARE,
        x=Point(0.0, 0.0),
        y=Point(1.0, 0.0),
        t=0.5,
        beta=2.0,
        h_sequence=(0.5, 0.25),
    )
    values.update(overrides)
    return SweepConfig(**values)


def _row(gap: float, flagged: bool = False) -> SweepRow:
    return SweepRow(
        h=0.1,
        distance=1,
        hd=0.1,
        log_kernel=gap,
        scaled=gap,
        target=0.0,
        gap=gap,
        error_bound=0.0,
        flagged=flagged,
        extent=10,
        steps=5,
    )


class RateFunctionTests(unittest.TestCase):
    def test_values(self) -> None:
        self.assertEqual(regimes.rate_function((0.0, 0.0)), 0.0)
        self.assertEqual(regimes.rate_function((1.0, 1.0)), 1.0)
        self.assertEqual(regimes.rate_function(3 + 4j), 12.5)

    def test_convexity_on_a_segment(self) -> None:
        a, b = Point(-1.0, 2.0), Point(3.0, 0.5)
        for s in (0.1, 0.5, 0.9):
            mid = Point(s * a.x + (1 - s) * b.x, s * a.y + (1 - s) * b.y)
            self.assertLessEqual(regimes.RATE(mid), s * regimes.RATE(a) + (1 - s) * regimes.RATE(b) + 1e-15)

    def test_path_infimum_into_a_disk(self) -> None:
        disk = Disk(Point(1.0, 0.0), 0.25)
        self.assertAlmostEqual(regimes.RATE.path_infimum(Point(0.0, 0.0), disk, 1.0), 0.28125, places=15)
        self.assertAlmostEqual(regimes.RATE.path_infimum(Point(0.0, 0.0), disk, 2.0), 0.140625, places=15)
        self.assertEqual(regimes.RATE.path_infimum(Point(1.1, 0.0), disk, 1.0), 0.0)


class DiskTests(unittest.TestCase):
    def test_disk_is_open(self) -> None:
        disk = Disk(Point(1.0, 0.0), 0.25)
        inside = disk([[1.0, 0.0], [1.25, 0.0], [1.2, 0.1], [0.0, 0.0]])
        self.assertEqual(inside.tolist(), [True, False, True, False])

    def test_radius_must_be_positive(self) -> None:
        with self.assertRaises(ConfigError):
            Disk(Point(0.0, 0.0), 0.0)


class SweepConfigTests(unittest.TestCase):
    def test_critical_exponent_is_rejected(self) -> None:
        with self.assertRaises(ConfigError) as ctx:
            _config(beta=1.0)
        self.assertIn("critical", str(ctx.exception))

    def test_regime_exponent_ranges(self) -> None:
        with self.assertRaises(ConfigError):
            _config(regime="euclidean", beta=1.5)
        with self.assertRaises(ConfigError):
            _config(regime="graph", beta=0.5)
        with self.assertRaises(ConfigError):
            _config(regime="ldp", beta=0.5)

    def test_h_sequence_rules(self) -> None:
        for seq in ((), (0.25, 0.5), (0.5, 0.5), (1.0, 0.5), (0.5, -0.1)):
            with self.assertRaises(ConfigError, msg=seq):
                _config(h_sequence=seq)

    def test_other_fields(self) -> None:
        with self.assertRaises(ConfigError):
            _config(t=0.0)
        with self.assertRaises(ConfigError):
            _config(regime="lattice")
        with self.assertRaises(ConfigError):
            _config(rel_tol=0.0)
        with self.assertRaises(ConfigError):
            _config(horizon=-1.0)

    def test_infinite_threshold_serializes_as_null(self) -> None:
        data = _config().as_dict()
        self.assertIsNone(data["threshold"])
        json.dumps(data, allow_nan=False)


class VerdictTests(unittest.TestCase):
    def test_shrinking_gaps_below_threshold_converge(self) -> None:
        rows = [_row(g) for g in (-1.909, -1.675, -1.417, -1.089)]
        self.assertEqual(regimes.verdict(rows, 1.1), "converging")
        self.assertEqual(regimes.verdict(rows, 1.0), "inconclusive")

    def test_growing_gap_is_inconclusive(self) -> None:
        rows = [_row(g) for g in (0.5, 0.3, 0.4)]
        self.assertEqual(regimes.verdict(rows, 10.0), "inconclusive")

    def test_only_the_last_three_rows_count(self) -> None:
        rows = [_row(0.1), _row(0.9), _row(0.5), _row(0.2)]
        self.assertEqual(regimes.verdict(rows, 1.0), "converging")

    def test_flagged_or_missing_rows_are_inconclusive(self) -> None:
        self.assertEqual(regimes.verdict([_row(0.3), _row(0.2, flagged=True)], 1.0), "inconclusive")
        self.assertEqual(regimes.verdict([_row(0.3), _row(math.nan)], 1.0), "inconclusive")
        self.assertEqual(regimes.verdict([], 1.0), "inconclusive")


class GraphSweepTests(unittest.TestCase):
    def test_unit_spacing_distance_scales_to_one(self) -> None:
        result = regimes.graph_sweep(_config())

        self.assertEqual([row.h for row in result.rows], [0.5, 0.25])
        self.assertEqual([row.distance for row in result.rows], [2, 4])
        for row in result.rows:
            self.assertFalse(row.flagged, msg=row)
            self.assertAlmostEqual(row.hd, 1.0, places=15)
            self.assertEqual(row.target, row.hd)
            self.assertEqual(row.l1_limit, 1.0)
            self.assertGreater(row.scaled, 0)
            self.assertLess(row.error_bound, 1e-4)

    def test_coinciding_points_sit_on_their_limit_at_every_h(self) -> None:
        result = regimes.graph_sweep(_config(y=Point(0.0, 0.0), threshold=1e-12))

        for row in result.rows:
            self.assertEqual(row.distance, 0)
            self.assertEqual(row.hd, 0.0)
            self.assertEqual(row.scaled, 0.0)
            self.assertEqual(row.gap, 0.0)
            self.assertEqual(row.error_bound, 0.0)
            self.assertLess(row.log_kernel, 0)
        self.assertEqual(result.verdict, "converging")

    def test_nearby_distinct_points_are_not_pinned(self) -> None:
        row = regimes.graph_sweep(_config(y=Point(0.1, 0.0), h_sequence=(0.5,))).rows[0]
        self.assertEqual(row.distance, 0)
        self.assertEqual(row.note, "")
        self.assertAlmostEqual(row.scaled, regimes.graph_regime_scale(0.5, 2.0) * row.log_kernel, places=12)

    def test_threads_do_not_change_rows(self) -> None:
        serial = regimes.graph_sweep(_config())
        threaded = regimes.graph_sweep(_config(workers=2))
        self.assertEqual(serial.rows, threaded.rows)

    def test_window_grows_after_a_too_small_report(self) -> None:
        real = regimes._build_window
        calls = []

        def flaky(spec, cfg, extent):
            calls.append(extent)
            if len(calls) == 1:
                raise WindowTooSmallError(source=0, required_radius=extent + 5, available_radius=float(extent))
            return real(spec, cfg, extent)

        with mock.patch.object(regimes, "_build_window", side_effect=flaky):
            result = regimes.graph_sweep(_config(h_sequence=(0.5,)))

        self.assertEqual(calls[1], calls[0] + 5 + constants.WINDOW_MARGIN)
        self.assertEqual(result.rows[0].extent, calls[1])
        self.assertFalse(result.rows[0].flagged)

    def test_window_that_never_fits_gives_a_flagged_row(self) -> None:
        def never(spec, cfg, extent):
            raise WindowTooSmallError(source=0, required_radius=extent + 1, available_radius=float(extent))

        with mock.patch.object(regimes, "_build_window", side_effect=never):
            result = regimes.graph_sweep(_config(h_sequence=(0.5,)))

        row = result.rows[0]
        self.assertTrue(row.flagged)
        self.assertIn("still too small", row.note)
        self.assertEqual(result.verdict, "inconclusive")


class EuclideanSweepTests(unittest.TestCase):
    def test_rows_and_target(self) -> None:
        cfg = _config(regime="euclidean", beta=0.5, t=1.0)
        result = regimes.run_sweep(cfg)

        self.assertEqual(result.config.regime, "euclidean")
        for row in result.rows:
            self.assertFalse(row.flagged, msg=row)
            self.assertEqual(row.target, -0.5)
            self.assertAlmostEqual(row.scaled, row.h**0.5 * row.log_kernel, places=12)
            self.assertLess(row.scaled, 0)

        self.assertEqual(regimes.run_sweep(cfg).rows, result.rows)

    def test_coinciding_points(self) -> None:
        cfg = _config(regime="euclidean", beta=0.5, t=1.0, y=Point(0.0, 0.0), h_sequence=(0.5,))
        row = regimes.euclidean_sweep(cfg).rows[0]
        self.assertEqual(row.target, 0.0)
        self.assertEqual(row.scaled, 0.0)
        self.assertEqual(row.gap, 0.0)
        self.assertEqual(row.hd, 0.0)
        self.assertEqual(row.distance, 0)
        self.assertEqual(row.note, "on-diagonal")
        self.assertFalse(row.flagged)
        self.assertLess(row.log_kernel, 0)


class LdpSweepTests(unittest.TestCase):
    def test_event_rows(self) -> None:
        disk = Disk(Point(1.0, 0.0), 0.25)
        cfg = _config(regime="ldp", beta=0.5, t=1.0, region=disk, horizon=1.0)
        result = regimes.ldp_sweep(cfg)

        for row in result.rows:
            self.assertFalse(row.flagged, msg=row)
            self.assertEqual(row.target, -0.28125)
            self.assertLess(row.scaled, 0)
            self.assertAlmostEqual(row.scaled, row.h**0.5 * row.log_kernel, places=12)

    def test_explicit_region_and_horizon_override_the_config(self) -> None:
        cfg = _config(regime="ldp", beta=0.5, t=1.0, region=Disk(Point(5.0, 0.0), 1.0), h_sequence=(0.5,))
        result = regimes.ldp_sweep(cfg, region=Disk(Point(1.0, 0.0), 0.25), T=2.0)
        self.assertEqual(result.config.horizon, 2.0)
        self.assertEqual(result.rows[0].target, -0.140625)


class WriterTests(unittest.TestCase):
    def test_outputs_are_byte_identical_on_rerun(self) -> None:
        cfg = _config(threshold=5.0)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            first = regimes.run_sweep(cfg)
            first.write_csv(tmp / "a.csv")
            first.write_json(tmp / "a.json")
            first.write_plot_data(tmp / "a.dat")
            second = regimes.run_sweep(cfg)
            second.write_csv(tmp / "b.csv")
            second.write_json(tmp / "b.json")

            self.assertEqual((tmp / "a.csv").read_bytes(), (tmp / "b.csv").read_bytes())
            self.assertEqual((tmp / "a.json").read_bytes(), (tmp / "b.json").read_bytes())

            lines = (tmp / "a.csv").read_text(encoding="utf-8").splitlines()
            self.assertEqual(lines[0], ",".join(regimes.CSV_COLUMNS))
            self.assertEqual(len(lines), 3)
            self.assertIn(",false,", lines[1])

            payload = json.loads((tmp / "a.json").read_text(encoding="utf-8"))
            self.assertEqual(payload["verdict"], first.verdict)
            self.assertEqual(len(payload["rows"]), 2)

            plot = (tmp / "a.dat").read_text(encoding="utf-8").splitlines()
            self.assertEqual(plot[0], "# h scaled target")
            self.assertEqual(plot[1].split()[0], "0.5")

    def test_failed_rows_serialize_without_nan(self) -> None:
        cfg = _config(h_sequence=(0.5,))
        with mock.patch.object(
            regimes,
            "_build_window",
            side_effect=WindowTooSmallError(source=0, required_radius=100, available_radius=1.0),
        ):
            result = regimes.run_sweep(cfg)
        text = json.dumps(result.as_dict(), allow_nan=False)
        self.assertIn('"flagged": true', text)


if __name__ == "__main__":
    unittest.main()

# heatlab/tests/test_evi.py
from __future__ import annotations

import math

import numpy as np
from django.test import SimpleTestCase

from heatlab.services import evi
from heatlab.services.errors import DomainError
from heatlab.services.functionals import make_measure
from heatlab.services.model_spaces import SQRT_PI_E, expected_c0, make_space


class HelperTests(SimpleTestCase):
    def test_s_kappa(self):
        self.assertEqual(evi.s_kappa(0.0, 0.7), 0.7)
        self.assertAlmostEqual(evi.s_kappa(1.0, math.pi / 2), 1.0, places=14)
        self.assertAlmostEqual(evi.s_kappa(-1.0, 1.0), math.sinh(1.0), places=14)
        # the series branch and the closed form meet
        self.assertAlmostEqual(evi.s_kappa(1e-5, 3.0), math.sin(math.sqrt(1e-5) * 3.0) / math.sqrt(1e-5), places=12)

    def test_geometric_grid(self):
        grid = evi.geometric_grid(0.01, 1.0, 4)
        self.assertEqual(len(grid), 9)
        self.assertAlmostEqual(grid[0], 0.01)
        self.assertAlmostEqual(grid[-1], 1.0)
        with self.assertRaises(DomainError):
            evi.geometric_grid(1.0, 0.1, 4)

    def test_cone_constants_agree(self):
        for N, v1 in ((2.0, math.pi / 2), (3.0, 1.3), (2.5, 0.4)):
            with self.subTest(N=N, v1=v1):
                self.assertAlmostEqual(evi.cone_c0_from_kernel_constant(N, v1), evi.cone_c0_closed_form(N, v1), places=13)

    def test_half_line_predictions(self):
        pred = evi.half_line_c0_predictions(2.0)
        self.assertAlmostEqual(pred["implemented"], math.sqrt(2.0 / math.e), places=13)
        self.assertAlmostEqual(pred["implemented_from_kernel_constant"], pred["implemented"], places=13)
        self.assertAlmostEqual(pred["alternative"], 2.0 * math.exp(-0.5), places=13)


class EuclideanTraceTests(SimpleTestCase):
    def test_closed_forms(self):
        grid = np.geomspace(0.1, 10.0, 9)
        for n in (1, 2, 3):
            trace = evi.heat_trace(make_space({"kind": "euclidean", "N": n}), grid)
            t = trace.t_grid
            with self.subTest(N=n):
                np.testing.assert_allclose(trace.u_n, np.sqrt(4 * math.pi * math.e * t), rtol=1e-6)
                np.testing.assert_allclose(trace.F, np.sqrt(t / (math.pi * math.e)), rtol=1e-6)
                np.testing.assert_allclose(trace.theta_sq, 2 * n * t, rtol=1e-8)
                self.assertAlmostEqual(trace.c0_estimate.value * SQRT_PI_E, 1.0, places=6)

    def test_frame_columns(self):
        trace = evi.heat_trace(make_space({"kind": "euclidean", "N": 1}), [0.5, 1.0, 2.0])
        frame = trace.to_frame()
        self.assertEqual(list(frame.columns), evi.TRACE_COLUMNS)
        self.assertEqual(len(frame), 3)

    def test_grid_validation(self):
        space = make_space({"kind": "euclidean", "N": 1})
        with self.assertRaises(DomainError):
            evi.heat_trace(space, [1.0])
        with self.assertRaises(DomainError):
            evi.heat_trace(space, [0.0, 1.0])

    def test_entropy_limit(self):
        space = make_space({"kind": "euclidean", "N": 2})
        est, target = evi.entropy_limit(space)
        self.assertAlmostEqual(target, -math.log(4 * math.pi * math.e), places=14)
        self.assertAlmostEqual(est.value, target, delta=1e-6)


class ConeTraceTests(SimpleTestCase):
    grid = np.geomspace(0.01, 1.0, 9)

    def test_c0_on_cones(self):
        for N, rho in ((2, 0.25), (2, 0.5), (3, 0.5)):
            space = make_space({"kind": "cone", "N": N, "rho": rho})
            trace = evi.heat_trace(space, self.grid)
            want = expected_c0(space)
            with self.subTest(N=N, rho=rho):
                self.assertAlmostEqual(trace.c0_estimate.value / want, 1.0, delta=1e-5)
                self.assertAlmostEqual(trace.c0_inf / want, 1.0, delta=1e-5)
                np.testing.assert_allclose(trace.theta_sq, 2 * N * trace.t_grid, rtol=1e-8)

    def test_half_line_c0(self):
        space = make_space({"kind": "weighted_half_line", "N": 2})
        trace = evi.heat_trace(space, self.grid)
        pred = evi.half_line_c0_predictions(2.0)
        self.assertAlmostEqual(trace.c0_estimate.value / pred["implemented"], 1.0, delta=1e-6)

    def test_pole_only(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        with self.assertRaises(DomainError):
            evi.heat_trace(space, self.grid, base=(1.0, 0.0))


class FlowShapeTests(SimpleTestCase):
    grid = np.geomspace(0.05, 0.5, 6)
    descriptors = [
        {"kind": "euclidean", "N": 3},
        {"kind": "cone", "N": 2, "rho": 0.25},
        {"kind": "half_space_2d"},
        {"kind": "interval", "N": 3},
    ]

    def test_monotone_concave_and_moment_bounded(self):
        for descriptor in self.descriptors:
            trace = evi.heat_trace(make_space(descriptor), self.grid)
            t, u, ratio = trace.t_grid, trace.u_n, trace.f_over_sqrt_t
            slopes = np.diff(u) / np.diff(t)
            with self.subTest(space=descriptor):
                self.assertTrue(np.all(np.diff(ratio) >= -1e-7 * ratio[:-1]), ratio)
                self.assertTrue(np.all(np.diff(u) > 0), u)
                self.assertTrue(np.all(slopes[1:] <= slopes[:-1] * (1.0 + 1e-7)), slopes)
                self.assertTrue(np.all(trace.theta_sq <= 2.0 * trace.N * t * (1.0 + 1e-8)), trace.theta_sq)

    def test_interval_moment_is_strictly_below_the_flat_bound(self):
        trace = evi.heat_trace(make_space({"kind": "interval", "N": 3}), self.grid)
        self.assertTrue(np.all(trace.theta_sq < 2.0 * trace.N * trace.t_grid))


class FErrorTests(SimpleTestCase):
    grid = np.geomspace(0.05, 0.5, 6)

    def test_error_is_cumulative_and_small_when_the_integrand_is_flat(self):
        trace = evi.heat_trace(make_space({"kind": "euclidean", "N": 2}), self.grid)
        err = trace.errors["F"]
        self.assertTrue(np.all(np.isfinite(err)))
        self.assertTrue(np.all(err >= 0.0))
        self.assertTrue(np.all(np.diff(err) >= 0.0))
        self.assertTrue(np.all(err < 1e-6 * trace.F))

    def test_error_covers_the_panel_rule(self):
        space = make_space({"kind": "interval", "N": 3})
        coarse = evi.heat_trace(space, self.grid, f_nodes=4)
        fine = evi.heat_trace(space, self.grid, f_nodes=16)
        gap = np.abs(coarse.F - fine.F)
        self.assertTrue(np.all(gap <= coarse.errors["F"] + fine.errors["F"] + 1e-12), (gap, coarse.errors["F"]))
        self.assertTrue(np.all(coarse.errors["F"] > 0.0))


class HalfPlaneTraceTests(SimpleTestCase):
    def test_interior_point_is_regular(self):
        space = make_space({"kind": "half_space_2d", "base": [0.0, 1.0]})
        trace = evi.heat_trace(space, np.geomspace(1e-3, 1e-2, 5))
        self.assertAlmostEqual(trace.c0_estimate.value * SQRT_PI_E, 1.0, delta=1e-2)

    def test_interior_entropy_limit(self):
        space = make_space({"kind": "half_space_2d", "base": [0.0, 1.0]})
        est, target = evi.entropy_limit(space)
        self.assertAlmostEqual(est.value, target, delta=1e-3)


class ShannonTests(SimpleTestCase):
    def test_gaussians_are_extremal(self):
        for n in (1, 2, 3):
            space = make_space({"kind": "euclidean", "N": n})
            m = make_measure(space, {"family": "gaussian", "t": 0.8})
            entry = evi.shannon_bound(space, m)
            with self.subTest(N=n):
                self.assertEqual(entry.spread_kind, "var")
                self.assertLessEqual(abs(entry.u_n - entry.bound), 1e-6 * entry.u_n)
                self.assertAlmostEqual(entry.t_star, 0.8, places=7)

    def test_strict_margin_off_the_gaussian_family(self):
        space = make_space({"kind": "euclidean", "N": 2})
        for spec in ({"family": "uniform_ball", "radius": 1.0},
                     {"family": "bump", "center": 1.5, "width": 0.4}):
            entry = evi.shannon_bound(space, make_measure(space, spec))
            with self.subTest(family=spec["family"]):
                self.assertGreater(entry.relative_margin, 1e-3)

    def test_point_constant_is_attained_by_the_pole_kernel(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        m = make_measure(space, {"family": "heat_kernel", "t": 0.6})
        entry = evi.shannon_bound(space, m, c0=expected_c0(space))
        self.assertEqual(entry.spread_kind, "second_moment")
        self.assertAlmostEqual(entry.relative_margin, 0.0, delta=1e-7)

    def test_constant_choice_is_exclusive(self):
        space = make_space({"kind": "euclidean", "N": 1})
        m = make_measure(space, {"family": "gaussian", "t": 1.0})
        with self.assertRaises(DomainError):
            evi.shannon_bound(space, m, c0=0.3, d0=3.0)


class EviCheckTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.space = make_space({"kind": "weighted_half_line", "N": 2})
        cls.targets = {
            "near_bump": {"family": "bump", "center": 1.0, "width": 0.5},
            "far_bump": {"family": "bump", "center": 3.0, "width": 0.4},
            "kernel": {"family": "heat_kernel", "t": 2.0},
            "ball": {"family": "uniform_ball", "radius": 1.5},
            "pair": {"family": "mixture", "components": [
                {"family": "bump", "center": 0.5, "width": 0.3},
                {"family": "bump", "center": 2.5, "width": 0.3}]},
        }

    def test_residuals_on_the_half_line(self):
        grid = np.geomspace(0.05, 5.0, 64)
        for name, spec in self.targets.items():
            rows = evi.evi_check(self.space, grid, make_measure(self.space, spec))
            with self.subTest(target=name):
                self.assertEqual(len(rows), 60)
                for r in rows:
                    self.assertGreaterEqual(r.residual, -max(r.fd_error, 1e-4), msg=f"t={r.t}")

    def test_same_flow_target_is_an_equality(self):
        grid = np.geomspace(0.05, 5.0, 64)
        rows = evi.evi_check(self.space, grid, make_measure(self.space, self.targets["kernel"]))
        worst = max(abs(r.residual) for r in rows)
        self.assertLess(worst, 1e-3)

    def test_grid_requirements(self):
        m = make_measure(self.space, self.targets["kernel"])
        with self.assertRaises(DomainError):
            evi.evi_check(self.space, [0.1, 0.2, 0.4, 0.8], m)
        with self.assertRaises(DomainError):
            evi.evi_check(self.space, [0.1, 0.2, 0.3, 0.4, 0.5], m)

    def test_integrated_form_and_shannon_chain(self):
        trace = evi.heat_trace(self.space, np.geomspace(0.05, 5.0, 12))
        for name, spec in self.targets.items():
            nu = make_measure(self.space, spec)
            rows = evi.integrated_evi_check(trace, nu)
            un, bound, t_best = evi.shannon_chain_bound(trace, nu)
            with self.subTest(target=name):
                self.assertTrue(all(r.margin >= -1e-6 for r in rows))
                self.assertLessEqual(un, bound * (1.0 + 1e-9))
                self.assertIn(t_best, trace.t_grid)

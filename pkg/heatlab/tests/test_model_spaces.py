# heatlab/tests/test_model_spaces.py
from __future__ import annotations

import math

from django.test import SimpleTestCase
from hypothesis import given
from hypothesis import strategies as st

from heatlab.services.errors import DomainError, PoleOnly
from heatlab.services.model_spaces import (
    SQRT_PI_E,
    SpaceKind,
    avr,
    ball_volume,
    cone_kernel_constant,
    d0_at,
    describe,
    distance,
    expected_c0,
    heat_equation_residual,
    heat_kernel,
    is_regular_point,
    make_space,
    omega,
    reference_mass,
    rescale,
)


class MakeSpaceTests(SimpleTestCase):
    def test_kind_aliases(self):
        self.assertIs(make_space({"kind": "rn", "N": 2}).kind, SpaceKind.EUCLIDEAN)
        self.assertIs(make_space({"kind": "half-plane"}).kind, SpaceKind.HALF_SPACE_2D)
        self.assertIs(make_space({"kind": "weighted_half_line", "N": 2}).kind, SpaceKind.WEIGHTED_HALF_LINE)

    def test_rejects_out_of_domain_parameters(self):
        bad = [
            {"kind": "euclidean", "N": 2.5},
            {"kind": "euclidean", "N": 0},
            {"kind": "cone", "N": 1, "rho": 0.5},
            {"kind": "cone", "N": 2, "rho": 1.5},
            {"kind": "cone", "N": 2, "v1": -1.0},
            {"kind": "half_space_2d", "base": [0.0, -1.0]},
            {"kind": "interval", "N": 3, "K": 3},
            {"kind": "euclidean", "N": 2, "K": 1},
            {"kind": "torus", "N": 2},
            {"kind": "euclidean", "N": 2, "length_scale": 0},
        ]
        for d in bad:
            with self.subTest(d=d), self.assertRaises(DomainError):
                make_space(d)

    def test_interval_defaults_to_sharp_curvature(self):
        space = make_space({"kind": "weighted_interval_positive_k", "N": 3})
        self.assertEqual(space.K, 2.0)
        self.assertEqual(space.base_point, (math.pi / 2,))

    def test_describe_carries_avr_and_regularity(self):
        d = describe(make_space({"kind": "cone", "N": 2, "rho": 0.5}))
        self.assertEqual(d["kind"], "cone")
        self.assertAlmostEqual(d["avr"], 0.5, places=14)
        self.assertFalse(d["regular_base"])


class ConstantTests(SimpleTestCase):
    def test_unit_ball_volumes(self):
        self.assertAlmostEqual(omega(1), 2.0, places=14)
        self.assertAlmostEqual(omega(2), math.pi, places=14)
        self.assertAlmostEqual(omega(3), 4.0 * math.pi / 3.0, places=14)

    def test_cone_kernel_constant_reduces_to_euclidean(self):
        for n in (1, 2, 3, 4):
            with self.subTest(N=n):
                self.assertAlmostEqual(cone_kernel_constant(n, omega(n)), (4.0 * math.pi) ** (-0.5 * n), places=14)

    def test_half_plane_c0_at_boundary_origin(self):
        space = make_space({"kind": "half_space_2d"})
        self.assertAlmostEqual(expected_c0(space), math.sqrt(2.0 / (math.pi * math.e)), places=14)
        self.assertAlmostEqual(d0_at(space, (0.0, 1.0)), SQRT_PI_E, places=14)
        self.assertTrue(is_regular_point(space, (3.0, 0.5)))
        self.assertFalse(is_regular_point(space, (3.0, 0.0)))

    def test_cone_c0_closed_form(self):
        for N, rho in ((2, 0.25), (2, 0.5), (3, 0.5)):
            space = make_space({"kind": "cone", "N": N, "rho": rho})
            v1 = 2.0 * math.pi * rho / N
            want = (math.pi * math.e) ** -0.5 * (v1 / omega(N)) ** (-1.0 / N)
            with self.subTest(N=N, rho=rho):
                self.assertAlmostEqual(space.v1, v1, places=14)
                self.assertAlmostEqual(expected_c0(space), want, places=13)

    def test_interval_reference_mass(self):
        self.assertAlmostEqual(reference_mass(make_space({"kind": "interval", "N": 3})), math.pi / 2.0, places=13)
        self.assertAlmostEqual(reference_mass(make_space({"kind": "interval", "N": 2})), 2.0, places=13)
        with self.assertRaises(DomainError):
            reference_mass(make_space({"kind": "euclidean", "N": 1}))


class GeometryTests(SimpleTestCase):
    def test_cone_distance_uses_scaled_angle(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        # angular gap pi on the unit circle is pi/2 on the cross-section
        self.assertAlmostEqual(distance(space, (1.0, 0.0), (1.0, math.pi)), math.sqrt(2.0), places=14)
        self.assertAlmostEqual(distance(space, (0.0, 0.0), (2.0, 1.0)), 2.0, places=14)

    def test_half_plane_ball_volume(self):
        space = make_space({"kind": "half_space_2d", "base": [0.0, 1.0]})
        self.assertAlmostEqual(ball_volume(space, (0.0, 1.0), 0.5), math.pi / 4.0, places=14)
        self.assertAlmostEqual(ball_volume(space, (0.0, 0.0), 2.0), 2.0 * math.pi, places=14)

    def test_cone_ball_volume_at_pole(self):
        space = make_space({"kind": "cone", "N": 3, "rho": 0.5})
        self.assertAlmostEqual(ball_volume(space, (0.0, 0.0), 2.0), space.v1 * 8.0, places=12)

    def test_avr(self):
        self.assertEqual(avr(make_space({"kind": "euclidean", "N": 3})), 1.0)
        self.assertEqual(avr(make_space({"kind": "half_space_2d"})), 0.5)
        self.assertEqual(avr(make_space({"kind": "interval", "N": 3})), 0.0)

    def test_rescaling_moves_avr(self):
        space = rescale(make_space({"kind": "euclidean", "N": 2}), 2.0, 3.0)
        self.assertAlmostEqual(avr(space), 3.0 / 4.0, places=14)
        self.assertAlmostEqual(ball_volume(space, (0.0, 0.0), 2.0), 3.0 * math.pi, places=13)


class BishopGromovTests(SimpleTestCase):
    # (descriptor, centre) pairs covering poles, boundary points and interior points
    centred = [
        ({"kind": "euclidean", "N": 3}, (0.0, 0.0, 0.0)),
        ({"kind": "half_space_2d"}, (0.0, 0.0)),
        ({"kind": "half_space_2d"}, (0.0, 0.7)),
        ({"kind": "cone", "N": 2, "rho": 0.5}, (0.0, 0.0)),
        ({"kind": "cone", "N": 2, "rho": 0.5}, (1.0, 0.3)),
        ({"kind": "weighted_half_line", "N": 3}, (0.8,)),
        ({"kind": "interval", "N": 3}, (math.pi / 2,)),
        ({"kind": "interval", "N": 3}, (0.4,)),
    ]

    @given(
        case=st.sampled_from(range(8)),
        radii=st.tuples(st.floats(min_value=0.01, max_value=3.0), st.floats(min_value=0.01, max_value=3.0)),
    )
    def test_volume_ratio_is_nonincreasing(self, case, radii):
        descriptor, x = self.centred[case]
        space = make_space(descriptor)
        small, large = sorted(radii)
        ratio = lambda r: ball_volume(space, x, r) / r ** space.N
        self.assertLessEqual(ratio(large), ratio(small) * (1.0 + 1e-9))


class HeatKernelTests(SimpleTestCase):
    def test_cone_pole_kernel(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        for t in (0.1, 1.0, 7.0):
            want = t ** -1.0 * math.exp(-1.0 / (4.0 * t)) / (2.0 * math.pi)
            with self.subTest(t=t):
                self.assertAlmostEqual(heat_kernel(space, (0.0, 0.0), (1.0, 0.3), t), want, places=14)

    def test_cone_kernel_off_pole_is_refused(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        with self.assertRaises(PoleOnly):
            heat_kernel(space, (1.0, 0.0), (2.0, 0.0), 1.0)

    def test_half_plane_kernel_is_reflected(self):
        space = make_space({"kind": "half_space_2d"})
        x, y, t = (0.3, 0.4), (-0.2, 1.1), 0.7
        g = lambda a, b: math.exp(-((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2) / (4 * t)) / (4 * math.pi * t)
        self.assertAlmostEqual(heat_kernel(space, x, y, t), g(x, y) + g(x, (y[0], -y[1])), places=14)

    def test_rescaled_kernel(self):
        base = make_space({"kind": "euclidean", "N": 1})
        space = rescale(base, 2.0, 3.0)
        # p'(x, y, t) = C^{-1} p(x, y, t / r^2)
        want = heat_kernel(base, (0.0,), (0.5,), 0.25) / 3.0
        self.assertAlmostEqual(heat_kernel(space, (0.0,), (0.5,), 1.0), want, places=14)

    def test_interval_kernel_solves_heat_equation(self):
        space = make_space({"kind": "interval", "N": 3})
        for x, y, t in ((1.0, 2.0, 0.1), (math.pi / 2, 0.7, 0.5), (0.4, 0.5, 1.0)):
            res, bound = heat_equation_residual(space, (x,), (y,), t)
            with self.subTest(x=x, y=y, t=t):
                self.assertLess(abs(res), bound + 1e-8)

    def test_interval_kernel_is_symmetric(self):
        space = make_space({"kind": "interval", "N": 3})
        a = heat_kernel(space, (0.4,), (2.1,), 0.3)
        b = heat_kernel(space, (2.1,), (0.4,), 0.3)
        self.assertAlmostEqual(a, b, places=13)

    def test_non_positive_time(self):
        with self.assertRaises(DomainError):
            heat_kernel(make_space({"kind": "euclidean", "N": 1}), (0.0,), (0.0,), 0.0)

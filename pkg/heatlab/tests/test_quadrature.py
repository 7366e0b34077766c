# heatlab/tests/test_quadrature.py
from __future__ import annotations

import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ndtr

from heatlab.services.errors import DomainError, IllConditioned
from heatlab.services.model_spaces import make_space
from heatlab.services.quadrature import (
    GaussianTail,
    QuadTolerance,
    integrate_2d,
    integrate_interval,
    integrate_measure,
    integrate_radial,
    limit_extrapolate,
    sqrt_scaled_integral,
)


class RadialTests(SimpleTestCase):
    def test_gaussian_first_moment(self):
        res = integrate_radial(lambda r: math.exp(-r * r / 4.0), 1.0, tail=GaussianTail(1.0))
        self.assertAlmostEqual(res.value, 2.0, places=10)
        self.assertLess(res.error_estimate, 1e-8)

    def test_fractional_weight(self):
        # int r^p exp(-r^2/4t) dr = (4t)^{(p+1)/2} Gamma((p+1)/2) / 2
        for p, t in ((0.5, 1.0), (1.7, 0.3), (0.0, 2.0)):
            want = 0.5 * (4.0 * t) ** (0.5 * (p + 1.0)) * math.gamma(0.5 * (p + 1.0))
            res = integrate_radial(lambda r: math.exp(-r * r / (4.0 * t)), p, tail=GaussianTail(t))
            with self.subTest(p=p, t=t):
                self.assertAlmostEqual(res.value / want, 1.0, places=9)

    def test_finite_domain(self):
        res = integrate_radial(lambda r: 1.0, 2.0, 3.0)
        self.assertAlmostEqual(res.value, 9.0, places=12)

    def test_infinite_domain_needs_tail(self):
        with self.assertRaises(DomainError):
            integrate_radial(lambda r: 1.0, 1.0)

    def test_non_integrable_power(self):
        with self.assertRaises(DomainError):
            integrate_radial(lambda r: 1.0, -1.0, 1.0)

    def test_more_nodes_never_hurts(self):
        f = lambda r: (1.0 + r * r) * math.exp(-r * r / 4.0)
        want = 2.0 + 8.0  # int r e^{-r^2/4} + int r^3 e^{-r^2/4}
        loose = integrate_radial(f, 1.0, tail=GaussianTail(1.0), tol=QuadTolerance(1e-6, 1e-6, 2_000))
        tight = integrate_radial(f, 1.0, tail=GaussianTail(1.0), tol=QuadTolerance(1e-12, 1e-12, 200_000))
        self.assertLessEqual(abs(tight.value - want), abs(loose.value - want) + 1e-12)

    @override_settings(HEATLAB={"quad": {"abs_tol": 1e-4, "rel_tol": 1e-4, "max_evals": 1000}})
    def test_tolerance_comes_from_settings(self):
        tol = QuadTolerance.from_settings()
        self.assertEqual(tol.abs_tol, 1e-4)
        self.assertEqual(tol.limit, 50)


class IntervalTests(SimpleTestCase):
    def test_algebraic_weight(self):
        # int_0^pi x^2 (pi - x)^2 dx = pi^5 / 30
        res = integrate_interval(lambda x: 1.0, 0.0, math.pi, wvar=(2.0, 2.0))
        self.assertAlmostEqual(res.value, math.pi ** 5 / 30.0, places=10)

    def test_interval_measure_endpoints(self):
        space = make_space({"kind": "interval", "N": 3})
        self.assertAlmostEqual(integrate_measure(lambda u: 1.0, space).value, math.pi / 2.0, places=10)
        # int_0^pi cos(u)^2 sin(u)^2 du = pi / 8
        self.assertAlmostEqual(integrate_measure(lambda u: math.cos(u) ** 2, space).value, math.pi / 8.0, places=10)
        half = integrate_measure(lambda u: 1.0, space, support=(0.0, math.pi / 2))
        self.assertAlmostEqual(half.value, math.pi / 4.0, places=10)

    def test_fractional_dimension_interval(self):
        space = make_space({"kind": "interval", "N": 2.5})
        want = math.sqrt(math.pi) * math.gamma(1.25) / math.gamma(1.75)
        self.assertAlmostEqual(integrate_measure(lambda u: 1.0, space).value, want, places=9)


class PlanarTests(SimpleTestCase):
    def test_half_plane_gaussian_mass(self):
        space = make_space({"kind": "half_space_2d", "base": [0.0, 1.0]})
        t = 0.5
        g = lambda x1, x2: np.exp(-(x1 ** 2 + (x2 - 1.0) ** 2) / (4.0 * t)) / (4.0 * math.pi * t)
        res = integrate_2d(g, space, tail=GaussianTail(t))
        # the part of the plane Gaussian above x2 = 0
        self.assertAlmostEqual(res.value, ndtr(1.0 / math.sqrt(2.0 * t)), places=8)

    def test_cone_area(self):
        space = make_space({"kind": "cone", "N": 2, "rho": 0.5})
        res = integrate_2d(lambda r, phi: np.ones_like(r), space, support=2.0)
        self.assertAlmostEqual(res.value, space.v1 * 4.0, places=9)

    def test_vector_valued_integrand(self):
        space = make_space({"kind": "euclidean", "N": 2})
        res = integrate_2d(lambda x1, x2: np.stack([np.ones_like(x1), x1 * x1]), space, support=1.0)
        self.assertEqual(res.value.shape, (2,))
        self.assertAlmostEqual(res.value[0], math.pi, places=9)
        self.assertAlmostEqual(res.value[1], math.pi / 4.0, places=9)

    @given(t=st.floats(min_value=0.05, max_value=5.0))
    def test_radial_and_planar_rules_agree(self, t):
        space = make_space({"kind": "euclidean", "N": 2})
        kernel = lambda r2: np.exp(-r2 / (4.0 * t)) / (4.0 * math.pi * t)
        radial = integrate_radial(lambda r: r * r * kernel(r * r), 1.0, tail=GaussianTail(t))
        planar = integrate_2d(lambda x1, x2: (x1 ** 2 + x2 ** 2) * kernel(x1 ** 2 + x2 ** 2), space, tail=GaussianTail(t))
        self.assertAlmostEqual(2.0 * math.pi * radial.value / planar.value, 1.0, delta=1e-8)
        self.assertAlmostEqual(planar.value / (4.0 * t), 1.0, delta=1e-8)

    def test_radial_measure_keeps_the_inner_edge(self):
        plane = make_space({"kind": "euclidean", "N": 2})
        annulus = integrate_measure(lambda r: 1.0, plane, support=(1.0, 2.0))
        self.assertAlmostEqual(annulus.value, 3.0 * math.pi, places=9)
        shell = integrate_measure(lambda r: 1.0, make_space({"kind": "euclidean", "N": 3}), support=(1.0, 2.0))
        self.assertAlmostEqual(shell.value, 4.0 * math.pi * 7.0 / 3.0, places=9)
        line = integrate_measure(lambda r: 1.0, make_space({"kind": "euclidean", "N": 1}), support=(0.5, 2.0))
        self.assertAlmostEqual(line.value, 3.0, places=9)


class LimitTests(SimpleTestCase):
    @staticmethod
    def g(s: float) -> float:
        return math.sqrt(s) * (1.0 + s)

    def test_sqrt_scaled_integral(self):
        for t in (1e-3, 0.5, 2.0):
            want = 2.0 * math.atan(math.sqrt(t)) / math.sqrt(t)
            with self.subTest(t=t):
                self.assertAlmostEqual(sqrt_scaled_integral(self.g, t), want, places=9)

    def test_extrapolates_to_two(self):
        samples = [(t, sqrt_scaled_integral(self.g, t)) for t in np.geomspace(1e-4, 1e-2, 8)]
        est = limit_extrapolate(samples)
        self.assertAlmostEqual(est.value, 2.0, delta=1e-4)
        self.assertAlmostEqual(est.exponent_used, 1.0, delta=0.05)

    def test_constant_samples(self):
        est = limit_extrapolate([(t, 3.5) for t in (0.1, 0.05, 0.02, 0.01)])
        self.assertEqual(est.value, 3.5)

    def test_too_few_samples(self):
        with self.assertRaises(DomainError):
            limit_extrapolate([(0.1, 1.0), (0.01, 1.1), (0.001, 1.2)])

    def test_exponent_on_range_edge(self):
        samples = [(t, 1.0 + t ** 6) for t in np.geomspace(0.2, 1.0, 8)]
        with self.assertRaises(IllConditioned):
            limit_extrapolate(samples)

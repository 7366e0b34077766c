# heatlab/tests/test_transport.py
from __future__ import annotations

import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given
from hypothesis import strategies as st

from heatlab.services.errors import CDFNotStrict, DomainError
from heatlab.services.functionals import make_measure, second_moment
from heatlab.services.model_spaces import make_space
from heatlab.services.transport import (
    discrete_w2,
    discretize,
    generic_quantile,
    level_grid,
    quantile,
    random_coupling_cost,
    w2,
    w2_squared,
    w2_to_dirac,
)


class QuantileTests(SimpleTestCase):
    def setUp(self):
        self.space = make_space({"kind": "weighted_half_line", "N": 2})
        self.kernel = make_measure(self.space, {"family": "heat_kernel", "t": 1.0})

    def test_closed_form_kernel_quantile(self):
        # CDF 1 - exp(-r^2 / 4t)
        level = 1.0 - math.exp(-1.0)
        value = self.kernel.density.quantile(np.array([level]), np.array([math.exp(-1.0)]))
        self.assertAlmostEqual(float(value[0]), 2.0, places=12)

    def test_generic_inversion_matches_closed_form(self):
        closed = quantile(self.kernel, 512)
        table = generic_quantile(self.kernel, 512)
        self.assertTrue(closed.closed_form)
        self.assertFalse(table.closed_form)
        np.testing.assert_allclose(table.values, closed.values, rtol=1e-7, atol=1e-9)

    def test_table_is_cached(self):
        self.assertIs(quantile(self.kernel, 256), quantile(self.kernel, 256))

    def test_level_grid_weights_sum_to_one(self):
        u, upper, fine, coarse = level_grid(1000)
        self.assertAlmostEqual(float(fine.sum()), 1.0, places=10)
        self.assertAlmostEqual(float(coarse.sum()), 1.0, places=10)
        np.testing.assert_allclose(u + upper, 1.0, rtol=0, atol=1e-15)
        with self.assertRaises(DomainError):
            level_grid(4)

    def test_zero_mass_gap_is_refused(self):
        space = make_space({"kind": "weighted_half_line", "N": 1})
        m = make_measure(space, {
            "family": "mixture",
            "components": [{"family": "uniform_ball", "radius": 1.0},
                           {"family": "bump", "center": 30.0, "width": 0.5}],
        }, validate=False)
        with self.assertRaises(CDFNotStrict):
            generic_quantile(m, 64)


class DistanceTests(SimpleTestCase):
    def test_translates_on_the_line(self):
        space = make_space({"kind": "weighted_half_line", "N": 1})
        a = make_measure(space, {"family": "bump", "center": 20.0, "width": 1.0})
        b = make_measure(space, {"family": "bump", "center": 23.0, "width": 1.0})
        self.assertAlmostEqual(w2(a, b), 3.0, places=7)
        self.assertAlmostEqual(w2(a, a), 0.0, places=12)

    def test_dirac_limit_agrees_with_second_moment(self):
        cases = [
            (make_space({"kind": "weighted_half_line", "N": 2}), {"family": "heat_kernel", "t": 1.0}),
            (make_space({"kind": "weighted_half_line", "N": 3}), {"family": "bump", "center": 2.0, "width": 0.5}),
            (make_space({"kind": "euclidean", "N": 3}), {"family": "gaussian", "t": 0.4}),
            (make_space({"kind": "cone", "N": 2, "rho": 0.5}), {"family": "uniform_ball", "radius": 1.5}),
        ]
        for space, spec in cases:
            m = make_measure(space, spec)
            want = math.sqrt(second_moment(m, space.base_point))
            with self.subTest(kind=space.kind.value, family=spec["family"]):
                self.assertAlmostEqual(w2_to_dirac(m, space.base_point), want, delta=1e-6 * want)

    def test_narrow_bump_approaches_second_moment(self):
        space = make_space({"kind": "weighted_half_line", "N": 2})
        kernel = make_measure(space, {"family": "heat_kernel", "t": 1.0})
        spot = make_measure(space, {"family": "bump", "center": 0.0, "width": 1e-3})
        sq, err = w2_squared(kernel, spot)
        self.assertAlmostEqual(sq, 4.0, delta=1e-2)
        self.assertLess(err, 1e-5)

    def test_radial_dirac_needs_the_base(self):
        space = make_space({"kind": "euclidean", "N": 2})
        m = make_measure(space, {"family": "gaussian", "t": 1.0})
        with self.assertRaises(DomainError):
            w2_to_dirac(m, (1.0, 0.0))

    def test_measures_on_different_spaces(self):
        a = make_measure(make_space({"kind": "weighted_half_line", "N": 2}), {"family": "heat_kernel", "t": 1.0})
        b = make_measure(make_space({"kind": "weighted_half_line", "N": 3}), {"family": "heat_kernel", "t": 1.0})
        with self.assertRaises(DomainError):
            w2(a, b)


class CouplingTests(SimpleTestCase):
    pairs = [
        ({"family": "heat_kernel", "t": 1.0}, {"family": "bump", "center": 3.0, "width": 0.5}),
        ({"family": "uniform_ball", "radius": 2.0}, {"family": "heat_kernel", "t": 0.3}),
    ]

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        space = make_space({"kind": "weighted_half_line", "N": 2})
        cls.atoms = [
            (discretize(make_measure(space, a), 20), discretize(make_measure(space, b), 20))
            for a, b in cls.pairs
        ]

    @given(pair=st.sampled_from([0, 1]), seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_monotone_coupling_beats_random_couplings(self, pair, seed):
        xs, ys = self.atoms[pair]
        best = discrete_w2(xs, ys)
        costs = random_coupling_cost(xs, ys, np.random.default_rng(seed), couplings=50)
        self.assertEqual(costs.shape, (50,))
        self.assertTrue(np.all(best <= costs + 1e-12))

    @given(
        xs=st.lists(st.floats(min_value=0.0, max_value=50.0), min_size=2, max_size=12),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_sorted_matching_beats_any_permutation(self, xs, seed):
        rng = np.random.default_rng(seed)
        ys = rng.uniform(0.0, 50.0, len(xs))
        shuffled = rng.permutation(ys)
        self.assertLessEqual(discrete_w2(xs, ys), float(np.mean(np.square(np.asarray(xs) - shuffled))) + 1e-9)

    def test_atom_count_mismatch(self):
        with self.assertRaises(DomainError):
            discrete_w2([0.0, 1.0], [0.0, 1.0, 2.0])


bumps = st.builds(
    lambda center, width: {"family": "bump", "center": center, "width": width},
    st.floats(min_value=1.0, max_value=6.0),
    st.floats(min_value=0.2, max_value=0.9),
)


class TriangleTests(SimpleTestCase):
    space = make_space({"kind": "weighted_half_line", "N": 2})

    @given(a=bumps, b=bumps, c=bumps)
    def test_w2_triangle_inequality(self, a, b, c):
        ma, mb, mc = (make_measure(self.space, spec) for spec in (a, b, c))
        direct = w2(ma, mc)
        self.assertLessEqual(direct, w2(ma, mb) + w2(mb, mc) + 1e-9 * (1.0 + direct))

    @given(a=bumps)
    def test_w2_to_itself_vanishes(self, a):
        m = make_measure(self.space, a)
        self.assertAlmostEqual(w2(m, m), 0.0, places=12)

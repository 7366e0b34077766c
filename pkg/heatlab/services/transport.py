# heatlab/services/transport.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from heatlab.services.conf import lab_setting
from heatlab.services.errors import CDFNotStrict, DegenerateMeasure, DomainError
from heatlab.services.functionals import ProbMeasure
from heatlab.services.model_spaces import Symmetry, check_point, distance

log = logging.getLogger(__name__)

# levels run over expit(s), |s| <= LOGIT_SPAN
LOGIT_SPAN = 30.0
GL_X, GL_W = np.polynomial.legendre.leggauss(16)
BASE_NODES = 2048
FEATURE_NODES = 192
FEATURE_REACH = 12.0
NEWTON_ITERS = 60


@dataclass(frozen=True)
class QuantileRep:
    """
    Inverse-CDF table on the logit level grid.
    `values` are distances from the coordinate origin (the base on radial spaces).
    `weights` integrate over levels with the trapezoid rule in s; `coarse_weights`
    do the same on every other node, for the Richardson step.
    """
    grid: np.ndarray
    values: np.ndarray
    upper: np.ndarray
    weights: np.ndarray
    coarse_weights: np.ndarray
    closed_form: bool = False

    def integrate(self, g: np.ndarray) -> tuple[float, float]:
        fine = float(np.dot(self.weights, g))
        coarse = float(np.dot(self.coarse_weights, g))
        return fine + (fine - coarse) / 3.0, abs(fine - coarse) / 3.0

    def at(self, level: float) -> float:
        return float(np.interp(level, self.grid, self.values))


def level_grid(levels: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Levels u = expit(s), their complements, and fine / coarse trapezoid weights in u."""
    n = int(levels)
    if n < 8:
        raise DomainError("need at least 8 quantile levels")
    n += n % 2
    s = np.linspace(-LOGIT_SPAN, LOGIT_SPAN, n + 1)
    h = s[1] - s[0]
    u = special.expit(s)
    upper = special.expit(-s)
    jac = u * upper
    fine = np.full(n + 1, h)
    fine[[0, -1]] = 0.5 * h
    coarse = np.zeros(n + 1)
    coarse[::2] = 2.0 * h
    coarse[[0, -1]] = h
    return u, upper, fine * jac, coarse * jac


# ---- CDF table ---------------------------------------------------------------
class _CdfTable:
    """Segment masses of rho * weight along the transport coordinate."""

    def __init__(self, m: ProbMeasure):
        space = m.space
        d = m.density
        if m.symmetry is Symmetry.AXIAL:
            raise DomainError("quantile couplings need a 1-D or radial law")
        if m.symmetry is Symmetry.RADIAL:
            k = space.radial_mass
            N = space.N
            self.weight: Callable = lambda r: k * np.power(r, N - 1.0)
            self.scale = 1.0
            lo, hi = 0.0, math.inf
            tail_power = N - 1.0
        else:
            C = space.mass_scale
            self.weight = lambda u: C * space.unit_weight(u)
            self.scale = space.length_scale
            lo, hi = space.coordinate_range()
            tail_power = space.N - 1.0
        if d.support is not None:
            lo, hi = max(lo, d.support[0]), min(hi, d.support[1])
        if math.isinf(hi):
            if d.tail is None:
                raise DomainError(f"{d.family} density needs a tail bound or a support")
            hi = d.tail.radius(tail_power)
        self.rho = d.value

        nodes = [np.linspace(lo, hi, BASE_NODES + 1)]
        for c, w in d.features:
            local = c + w * np.linspace(-FEATURE_REACH, FEATURE_REACH, FEATURE_NODES + 1)
            nodes.append(local[(local > lo) & (local < hi)])
        x = np.unique(np.concatenate(nodes))
        self.nodes = x
        seg = self.partial(x[:-1], x[1:])
        if np.any(seg < 0) or not np.all(np.isfinite(seg)):
            raise DegenerateMeasure(f"{d.family} density is negative or not finite")
        total = float(seg.sum())
        if total <= 0:
            raise DegenerateMeasure(f"{d.family} density carries no mass")
        seg = seg / total
        left = np.concatenate([[0.0], np.cumsum(seg)])
        right = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        interior = (left[:-1] > 0) & (right[1:] > 0) & (seg == 0)
        if np.any(interior):
            j = int(np.argmax(interior))
            raise CDFNotStrict(f"zero-mass plateau on [{x[j]:.6g}, {x[j + 1]:.6g}]")
        self.seg, self.left, self.right, self.total = seg, left, right, total

    def integrand(self, x: np.ndarray) -> np.ndarray:
        flat = np.ravel(x)
        vals = np.asarray(self.rho(flat), dtype=float) * self.weight(flat)
        return np.reshape(vals, np.shape(x))

    def partial(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * GL_X[None, :]
        return half * (self.integrand(pts) @ GL_W)

    def invert(self, levels: np.ndarray, upper: np.ndarray) -> np.ndarray:
        """Coordinates x with F(x) = level; levels above one half are matched through 1 - F."""
        low = levels < 0.5
        j = np.where(
            low,
            np.searchsorted(self.left, levels, side="right") - 1,
            np.searchsorted(-self.right, -upper, side="left") - 1,
        )
        j = np.clip(j, 0, self.seg.size - 1)
        # mass needed inside segment j, measured from its left end
        target = np.where(low, levels - self.left[j], self.seg[j] - (upper - self.right[j + 1]))
        target = np.clip(target, 0.0, self.seg[j]) * self.total
        a = self.nodes[j].astype(float)
        b = self.nodes[j + 1].astype(float)
        lo, hi = a.copy(), b.copy()
        x = a + (b - a) * np.where(self.seg[j] > 0, target / np.maximum(self.seg[j] * self.total, 1e-300), 0.5)
        for _ in range(NEWTON_ITERS):
            g = self.partial(a, x) - target
            lo = np.where(g < 0, x, lo)
            hi = np.where(g >= 0, x, hi)
            f = self.integrand(x)
            step = np.where(f > 0, g / np.where(f > 0, f, 1.0), np.inf)
            nxt = x - step
            bad = ~np.isfinite(nxt) | (nxt <= lo) | (nxt >= hi)
            nxt = np.where(bad, 0.5 * (lo + hi), nxt)
            done = np.abs(nxt - x) <= 1e-15 * np.maximum(1.0, np.abs(x))
            x = nxt
            if np.all(done):
                break
        return x


# ---- Operations --------------------------------------------------------------
def quantile(m: ProbMeasure, levels: int | None = None) -> QuantileRep:
    levels = int(levels or lab_setting("ot.levels", 4096))
    key = f"quantile:{levels}"
    if key in m.cache:
        return m.cache[key]
    u, upper, w_fine, w_coarse = level_grid(levels)
    if m.density.quantile is not None:
        values = np.asarray(m.density.quantile(u, upper), dtype=float)
        rep = QuantileRep(u, values, upper, w_fine, w_coarse, closed_form=True)
    else:
        table = _CdfTable(m)
        values = table.scale * table.invert(u, upper)
        rep = QuantileRep(u, values, upper, w_fine, w_coarse)
    if np.any(np.diff(rep.values) < -1e-12 * max(1.0, float(np.max(np.abs(rep.values))))):
        log.warning("%s: quantile table lost monotonicity", m.name)
    m.cache[key] = rep
    return rep


def generic_quantile(m: ProbMeasure, levels: int | None = None) -> QuantileRep:
    """Cumulative-quadrature path regardless of any closed-form inverse; used as a cross-check."""
    u, upper, w_fine, w_coarse = level_grid(int(levels or lab_setting("ot.levels", 4096)))
    table = _CdfTable(m)
    return QuantileRep(u, table.scale * table.invert(u, upper), upper, w_fine, w_coarse)


def w2_squared(m1: ProbMeasure, m2: ProbMeasure, levels: int | None = None) -> tuple[float, float]:
    if m1.space != m2.space:
        raise DomainError("both measures must live on the same space")
    q1 = quantile(m1, levels)
    q2 = quantile(m2, levels)
    value, err = q1.integrate(np.square(q1.values - q2.values))
    return max(value, 0.0), err


def w2(m1: ProbMeasure, m2: ProbMeasure, levels: int | None = None) -> float:
    return math.sqrt(w2_squared(m1, m2, levels)[0])


def w2_to_dirac(m: ProbMeasure, z, levels: int | None = None) -> float:
    """W_2(m, delta_z) from the quantile table; on radial spaces z must be the base."""
    space = m.space
    z = check_point(space, z)
    q = quantile(m, levels)
    if m.symmetry is Symmetry.RADIAL:
        if distance(space, space.base_point, z) != 0.0:
            raise DomainError("radial quantile tables only see distances to the base")
        anchor = 0.0
    else:
        anchor = space.length_scale * z[0]
    value, _err = q.integrate(np.square(q.values - anchor))
    return math.sqrt(max(value, 0.0))


# ---- Discrete couplings ------------------------------------------------------
def discretize(m: ProbMeasure, atoms: int = 20, levels: int | None = None) -> np.ndarray:
    """Equal-mass atoms at the quantiles of the cell midpoints."""
    q = quantile(m, levels)
    mids = (np.arange(atoms) + 0.5) / atoms
    return np.interp(mids, q.grid, q.values)


def discrete_w2(xs, ys) -> float:
    """W_2^2 between two uniform empirical laws with the same number of atoms."""
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape:
        raise DomainError("empirical laws need the same number of atoms")
    return float(np.mean(np.square(xs - ys)))


def random_coupling_cost(xs, ys, rng: np.random.Generator, couplings: int = 50, mix: int = 4) -> np.ndarray:
    """
    Transport costs of random feasible couplings between two uniform empirical laws.
    Each coupling is a random convex combination of `mix` permutation matrices,
    hence doubly stochastic.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.size
    costs = np.empty(couplings)
    for i in range(couplings):
        lam = rng.dirichlet(np.ones(mix))
        plan = np.zeros((n, n))
        for weight in lam:
            plan[np.arange(n), rng.permutation(n)] += weight / n
        costs[i] = float(np.sum(plan * np.square(xs[:, None] - ys[None, :])))
    return costs

# heatlab/services/functionals.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from heatlab.services import densities
from heatlab.services.densities import RHO_FLOOR, Density
from heatlab.services.errors import (
    DegenerateMeasure,
    DerivativeUnavailable,
    DomainError,
    OptimizerStalled,
)
from heatlab.services.model_spaces import (
    ModelSpace,
    Point,
    SpaceKind,
    Symmetry,
    ball_volume,
    check_point,
    distance,
    omega,
)
from heatlab.services.quadrature import QuadResult, QuadTolerance, integrate_measure

log = logging.getLogger(__name__)

MASS_TOL = 1e-8


# ---- Measures ----------------------------------------------------------------
@dataclass
class ProbMeasure:
    """
    A probability density on `space`, normalised against the reference measure m.
    `beta` rescales the reference measure only: entropies are reported against
    beta * m, where the same law has density rho / beta.
    """
    space: ModelSpace
    density: Density
    beta: float = 1.0
    name: str = ""
    cache: dict[str, QuadResult] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")

    @property
    def symmetry(self) -> Symmetry:
        return self.density.symmetry

    @property
    def N(self) -> float:
        return self.space.N

    def integrate(self, f: Callable, tol: QuadTolerance | None = None) -> QuadResult:
        d = self.density
        return integrate_measure(f, self.space, tail=d.tail, support=d.support,
                                 points=d.points, tol=tol)

    def moment(self, key: str, weight: Callable, tol: QuadTolerance | None = None) -> QuadResult:
        """int weight * rho dm, cached under `key`."""
        if key not in self.cache:
            rho = self.density.value
            self.cache[key] = self.integrate(lambda *x: weight(*x) * rho(*x), tol)
        return self.cache[key]

    def with_beta(self, beta: float) -> "ProbMeasure":
        # moments are taken against m, so the cache carries over
        return replace(self, beta=beta, cache=self.cache)


def make_measure(space: ModelSpace, spec: Mapping[str, Any] | Density, *, beta: float = 1.0,
                 name: str = "", validate: bool = True) -> ProbMeasure:
    dens = spec if isinstance(spec, Density) else densities.build_density(space, spec)
    if dens.symmetry is not space.symmetry:
        raise DomainError(f"{dens.family} density is {dens.symmetry.value}, space is {space.symmetry.value}")
    m = ProbMeasure(space, dens, float(beta), name or dens.family)
    if validate:
        mass = total_mass(m)
        if abs(mass.value - 1.0) > max(MASS_TOL, 10.0 * mass.error_estimate):
            raise DegenerateMeasure(f"{m.name} has mass {mass.value:.12g} against m, expected 1")
    return m


def total_mass(m: ProbMeasure) -> QuadResult:
    return m.moment("mass", lambda *x: 1.0)


# ---- Entropy -----------------------------------------------------------------
def _rho_log_rho(d: Density) -> Callable:
    def f(*x):
        v = np.asarray(d.value(*x), dtype=float)
        lv = d.log_value(*x) if d.log_value is not None else np.log(np.maximum(v, RHO_FLOOR))
        return np.where(v > RHO_FLOOR, v * np.asarray(lv, dtype=float), 0.0)
    return f


def entropy_result(m: ProbMeasure, tol: QuadTolerance | None = None) -> QuadResult:
    """Ent against beta * m with its quadrature error."""
    if "ent" not in m.cache:
        m.cache["ent"] = m.integrate(_rho_log_rho(m.density), tol)
    res = m.cache["ent"]
    return QuadResult(res.value - math.log(m.beta), res.error_estimate, res.evaluations)


def entropy(m: ProbMeasure, tol: QuadTolerance | None = None) -> float:
    return entropy_result(m, tol).value


def u_n(ent: float, N: float) -> float:
    return math.exp(-ent / N)


# ---- Moments -----------------------------------------------------------------
def _angular_cos_mean(space: ModelSpace) -> float:
    """E[cos delta] for a rotation-invariant law seen from a point off the base."""
    if space.kind is SpaceKind.CONE and space.cross_section == "circle":
        a = math.pi * space.rho
        return math.sin(a) / a
    return 0.0


def _radial_moments(m: ProbMeasure):
    theta = m.moment("r2", lambda r: np.square(r))
    mean_r = m.moment("r1", lambda r: np.asarray(r, dtype=float))
    return theta, mean_r


def _flat_moments(m: ProbMeasure):
    if m.symmetry is Symmetry.AXIAL:
        e1 = m.moment("x1", lambda x1, x2: x1)
        e2 = m.moment("x2", lambda x1, x2: x2)
        sq = m.moment("xx", lambda x1, x2: x1 * x1 + x2 * x2)
        return (e1, e2), sq
    e = m.moment("u1", lambda u: np.asarray(u, dtype=float))
    sq = m.moment("u2", lambda u: np.square(u))
    return (e,), sq


def second_moment_result(m: ProbMeasure, z) -> QuadResult:
    """W_2^2(m, delta_z) = int d(z, .)^2 dm, reduced to a few cached moments."""
    space = m.space
    z = check_point(space, z)
    ls = space.length_scale
    if m.symmetry is Symmetry.RADIAL:
        theta, mean_r = _radial_moments(m)
        D = distance(space, space.base_point, z)
        if D == 0.0:
            return theta
        kappa = _angular_cos_mean(space)
        value = theta.value + D * D - 2.0 * D * kappa * mean_r.value
        err = theta.error_estimate + 2.0 * D * kappa * mean_r.error_estimate
        return QuadResult(value, err, theta.evaluations + mean_r.evaluations)

    firsts, sq = _flat_moments(m)
    value = sq.value + sum(zi * zi - 2.0 * zi * e.value for zi, e in zip(z, firsts))
    err = sq.error_estimate + sum(2.0 * abs(zi) * e.error_estimate for zi, e in zip(z, firsts))
    evals = sq.evaluations + sum(e.evaluations for e in firsts)
    return QuadResult(ls * ls * value, ls * ls * err, evals)


def second_moment(m: ProbMeasure, z) -> float:
    return second_moment_result(m, z).value


@dataclass(frozen=True)
class Barycenter:
    var: float
    point: Point
    width: float  # extent of the minimiser set along the search coordinate
    error_estimate: float = 0.0


def barycenter(m: ProbMeasure) -> Barycenter:
    """
    Minimise z -> second_moment(m, z) over the symmetry-reduced search set:
    - radial: along one ray, D -> theta^2 + D^2 - 2 D kappa E[r]
    - half-plane: the flat mean (E x1, E x2)
    - 1-D models: the mean coordinate
    Each reduced objective is a convex quadratic, so the minimiser is unique.
    """
    space = m.space
    ls = space.length_scale
    if m.symmetry is Symmetry.RADIAL:
        theta, mean_r = _radial_moments(m)
        kappa = _angular_cos_mean(space)
        D = kappa * mean_r.value
        var = theta.value - D * D
        if D <= 0.0:
            return Barycenter(var, space.base_point, 0.0, theta.error_estimate)
        point = (D / ls, 0.0)
        return Barycenter(var, point, 0.0, theta.error_estimate + 2.0 * D * mean_r.error_estimate)

    firsts, sq = _flat_moments(m)
    mean = tuple(e.value for e in firsts)
    var = ls * ls * (sq.value - sum(c * c for c in mean))
    err = ls * ls * (sq.error_estimate + sum(2.0 * abs(c) * e.error_estimate for c, e in zip(mean, firsts)))
    if not all(math.isfinite(c) for c in mean):
        raise OptimizerStalled(f"barycenter search produced {mean}")
    if m.symmetry is Symmetry.AXIAL:
        if mean[1] < -1e-9:
            raise OptimizerStalled(f"mean height {mean[1]:.3g} left the half-plane")
        point = (mean[0], max(mean[1], 0.0))
    else:
        lo, hi = space.coordinate_range()
        slack = 1e-9 * max(1.0, abs(mean[0]))
        if not lo - slack <= mean[0] <= hi + slack:
            raise OptimizerStalled(f"mean coordinate {mean[0]:.6g} outside [{lo}, {hi}]")
        point = (min(max(mean[0], lo), hi),)
    return Barycenter(max(var, 0.0), point, 0.0, err)


def variance_and_barycenter(m: ProbMeasure) -> tuple[float, Point]:
    b = barycenter(m)
    return b.var, b.point


# ---- Fisher information ------------------------------------------------------
def fisher_result(m: ProbMeasure, tol: QuadTolerance | None = None) -> QuadResult:
    """int |grad rho|^2 / rho dm; the same number against beta * m with density rho / beta."""
    d = m.density
    if d.score is None:
        raise DerivativeUnavailable(f"{d.family} density has no derivative rule")
    if "fisher" not in m.cache:
        if m.symmetry is Symmetry.AXIAL:
            def sq(x1, x2):
                g1, g2 = d.score(x1, x2)
                return np.square(g1) + np.square(g2)
        else:
            def sq(*x):
                return np.square(d.score(*x))

        rho = d.value

        def f(*x):
            v = np.asarray(rho(*x), dtype=float)
            return np.where(v > RHO_FLOOR, v * sq(*x), 0.0)

        m.cache["fisher"] = m.integrate(f, tol)
    return m.cache["fisher"]


def fisher_info(m: ProbMeasure, tol: QuadTolerance | None = None) -> float:
    return fisher_result(m, tol).value


# ---- Reports -----------------------------------------------------------------
@dataclass
class FunctionalReport:
    ent: float
    u_n: float
    second_moment_at: dict[Point, float]
    var: float
    barycenter: Point
    fisher: float | None = None
    barycenter_width: float = 0.0
    errors: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            "ent": self.ent,
            "u_n": self.u_n,
            "second_moment_at": {",".join(f"{c:g}" for c in k): v for k, v in self.second_moment_at.items()},
            "var": self.var,
            "barycenter": list(self.barycenter),
            "barycenter_width": self.barycenter_width,
            "fisher": self.fisher,
            "errors": dict(self.errors),
        }


def functional_report(m: ProbMeasure, points: Iterable = ()) -> FunctionalReport:
    ent = entropy_result(m)
    b = barycenter(m)
    moments: dict[Point, float] = {}
    errors = {"ent": ent.error_estimate, "var": b.error_estimate}
    for z in points:
        res = second_moment_result(m, z)
        key = check_point(m.space, z)
        moments[key] = res.value
        errors[f"second_moment_at[{','.join(f'{c:g}' for c in key)}]"] = res.error_estimate
    fisher = None
    try:
        fr = fisher_result(m)
        fisher = fr.value
        errors["fisher"] = fr.error_estimate
    except DerivativeUnavailable:
        log.debug("%s: no derivative rule, Fisher information skipped", m.name)
    un = u_n(ent.value, m.N)
    errors["u_n"] = un * ent.error_estimate / m.N
    return FunctionalReport(ent.value, un, moments, b.var, b.point, fisher, b.width, errors)


# ---- Rescaled entropy --------------------------------------------------------
def rescaled_entropy(space: ModelSpace, x, t: float) -> float:
    """
    Ent of the heat kernel from x against alpha_t * m, alpha_t = omega_N / m(B_sqrt(t)(x)).
    Tends to -(N/2) log(4 pi e) as t -> 0 at points of unit volume density.
    """
    x = check_point(space, x)
    src_space = space
    if space.symmetry is Symmetry.RADIAL:
        if space.kind is not SpaceKind.EUCLIDEAN and x != space.base_point:
            raise DomainError("radial cone kernels are taken from the pole")
        src_space = replace(space, base_point=x)
    m = ProbMeasure(src_space, densities.heat_kernel(src_space, t, x), name="heat_kernel")
    alpha = omega(space.N) / ball_volume(space, x, math.sqrt(t))
    return entropy(m) - math.log(alpha)

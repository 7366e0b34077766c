# heatlab/services/densities.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import special

from heatlab.services.errors import DegenerateMeasure, DomainError, PoleOnly
from heatlab.services.model_spaces import (
    ModelSpace,
    SpaceKind,
    Symmetry,
    ball_volume,
    check_point,
    cone_kernel_constant,
    interval_kernel_terms,
    reference_mass,
)
from heatlab.services.quadrature import GaussianTail, QuadTolerance, integrate_measure

FAMILIES = ("gaussian", "heat_kernel", "bump", "uniform_ball", "mixture", "reference")

# rho below this counts as outside {rho > 0}
RHO_FLOOR = 1e-300


@dataclass(frozen=True)
class Density:
    """
    A density against the reference measure, evaluated along the symmetry coordinate:
    the distance r from the base (radial), the coordinate u (1-D models) or the
    cartesian pair (x1, x2) (half-plane).
    `score` is the metric gradient of log rho (a pair on the half-plane).
    `features` lists (center, width) spots along the coordinate; `support` bounds it.
    """
    family: str
    symmetry: Symmetry
    value: Callable
    log_value: Callable | None = None
    score: Callable | None = None
    tail: GaussianTail | None = None
    support: tuple[float, float] | None = None
    features: tuple[tuple[float, float], ...] = ()
    quantile: Callable | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def points(self) -> list[float]:
        pts = [c for c, _w in self.features if c > 0]
        if self.support is not None:
            pts.extend(s for s in self.support if math.isfinite(s) and s > 0)
        return sorted(set(pts))

    def mass(self, space: ModelSpace, tol: QuadTolerance | None = None):
        return integrate_measure(self.value, space, tail=self.tail, support=self.support,
                                 points=self.points, tol=tol)


# ---- Helpers -----------------------------------------------------------------
def _normalizer(space: ModelSpace, profile: Callable, **kw) -> float:
    Z = integrate_measure(profile, space, **kw).value
    if not Z > 0 or not math.isfinite(Z):
        raise DegenerateMeasure(f"profile has non-positive mass {Z}")
    return Z


def _safe_log(v):
    v = np.asarray(v, dtype=float)
    return np.log(np.maximum(v, RHO_FLOOR))


def _radial_gamma_quantile(N: float, t: float) -> Callable:
    """Inverse CDF of r under c t^{-N/2} exp(-r^2/4t) r^{N-1}: r^2/4t is Gamma(N/2)."""
    a = 0.5 * N

    def q(levels, upper):
        levels = np.asarray(levels, dtype=float)
        upper = np.asarray(upper, dtype=float)
        lower = np.where(levels < 0.5, special.gammaincinv(a, levels), 0.0)
        top = np.where(levels >= 0.5, special.gammainccinv(a, upper), 0.0)
        return 2.0 * np.sqrt(t * np.where(levels < 0.5, lower, top))

    return q


def _power_quantile(N: float, R: float) -> Callable:
    def q(levels, upper):
        return R * np.asarray(levels, dtype=float) ** (1.0 / N)
    return q


def _base_coord(space: ModelSpace) -> float:
    return space.base_point[0] if space.symmetry is Symmetry.GENERAL_1D else 0.0


# ---- Families ----------------------------------------------------------------
def gaussian(space: ModelSpace, t: float) -> Density:
    """exp(-d(base, .)^2 / 4t), normalised; the Euclidean heat kernel on R^N."""
    if t <= 0:
        raise DomainError("gaussian needs t > 0")
    sym = space.symmetry
    N = space.N
    params = {"t": t}

    if sym is Symmetry.RADIAL:
        Z = space.radial_mass * 0.5 * (4.0 * t) ** (0.5 * N) * math.gamma(0.5 * N)
        return Density(
            "gaussian", sym,
            value=lambda r: np.exp(-np.square(r) / (4.0 * t)) / Z,
            log_value=lambda r: -np.square(r) / (4.0 * t) - math.log(Z),
            score=lambda r: -np.asarray(r, dtype=float) / (2.0 * t),
            tail=GaussianTail(t), features=((0.0, math.sqrt(2.0 * t)),),
            quantile=_radial_gamma_quantile(N, t), params=params,
        )

    ls = space.length_scale
    tau = t / ls ** 2
    if sym is Symmetry.AXIAL:
        b1, b2 = space.base_point
        Z = space.mass_scale * 4.0 * math.pi * tau * special.ndtr(b2 / math.sqrt(2.0 * tau))

        def log_value(x1, x2):
            return -((x1 - b1) ** 2 + (x2 - b2) ** 2) / (4.0 * tau) - math.log(Z)

        return Density(
            "gaussian", sym,
            value=lambda x1, x2: np.exp(log_value(x1, x2)),
            log_value=log_value,
            score=lambda x1, x2: (-(x1 - b1) / (2.0 * tau * ls), -(x2 - b2) / (2.0 * tau * ls)),
            tail=GaussianTail(t), features=((0.0, math.sqrt(2.0 * t)),), params=params,
        )

    if space.kind is not SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
        return heat_kernel(space, t) if space.is_cone_type else _unsupported("gaussian", space)
    b = _base_coord(space)
    profile = lambda u: np.exp(-np.square(np.asarray(u, dtype=float) - b) / (4.0 * tau))
    Z = _normalizer(space, profile, points=[b])
    return Density(
        "gaussian", sym,
        value=lambda u: profile(u) / Z,
        log_value=lambda u: -np.square(np.asarray(u, dtype=float) - b) / (4.0 * tau) - math.log(Z),
        score=lambda u: -(np.asarray(u, dtype=float) - b) / (2.0 * tau * ls),
        features=((b, math.sqrt(2.0 * tau)),), params=params,
    )


def heat_kernel(space: ModelSpace, t: float, source=None) -> Density:
    """y -> p(source, y, t) as a density; the source defaults to the base point."""
    if t <= 0:
        raise DomainError("heat kernel needs t > 0")
    src = space.base_point if source is None else check_point(space, source)
    sym = space.symmetry
    N = space.N
    ls = space.length_scale
    tau = t / ls ** 2
    params = {"t": t, "source": list(src)}

    if space.is_cone_type and any(src):
        raise PoleOnly(f"the {space.kind.value} kernel is only available from the pole")

    if sym is Symmetry.RADIAL:
        if any(a != b for a, b in zip(src, space.base_point)):
            raise DomainError("radial kernels are taken from the base point")
        c = cone_kernel_constant(N, space.v1)
        log_c = math.log(c) - 0.5 * N * math.log(t)
        return Density(
            "heat_kernel", sym,
            value=lambda r: np.exp(log_c - np.square(r) / (4.0 * t)),
            log_value=lambda r: log_c - np.square(r) / (4.0 * t),
            score=lambda r: -np.asarray(r, dtype=float) / (2.0 * t),
            tail=GaussianTail(t), features=((0.0, math.sqrt(2.0 * t)),),
            quantile=_radial_gamma_quantile(N, t), params=params,
        )

    if sym is Symmetry.AXIAL:
        s1, s2 = src
        b1, b2 = space.base_point
        log_c = -math.log(4.0 * math.pi * tau * space.mass_scale)

        def log_value(x1, x2):
            x1 = np.asarray(x1, dtype=float)
            x2 = np.asarray(x2, dtype=float)
            # |x - s*|^2 - |x - s|^2 = 4 x2 s2 >= 0 on the half-plane
            return (log_c - ((x1 - s1) ** 2 + (x2 - s2) ** 2) / (4.0 * tau)
                    + np.log1p(np.exp(-x2 * s2 / tau)))

        def score(x1, x2):
            x1 = np.asarray(x1, dtype=float)
            x2 = np.asarray(x2, dtype=float)
            mirror = special.expit(-x2 * s2 / tau)
            g1 = -(x1 - s1) / (2.0 * tau)
            g2 = -(x2 - s2) / (2.0 * tau) - (s2 / tau) * mirror
            return g1 / ls, g2 / ls

        offset = ls * math.hypot(s1 - b1, s2 - b2)
        return Density(
            "heat_kernel", sym,
            value=lambda x1, x2: np.exp(log_value(x1, x2)),
            log_value=log_value, score=score,
            tail=GaussianTail(t, offset), features=((offset, math.sqrt(2.0 * t)),), params=params,
        )

    if space.is_cone_type:
        c = cone_kernel_constant(N, space.cross_section_mass / N)
        log_c = math.log(c) - 0.5 * N * math.log(tau) - math.log(space.mass_scale)
        return Density(
            "heat_kernel", sym,
            value=lambda u: np.exp(log_c - np.square(u) / (4.0 * tau)),
            log_value=lambda u: log_c - np.square(u) / (4.0 * tau),
            score=lambda u: -np.asarray(u, dtype=float) / (2.0 * tau * ls),
            tail=GaussianTail(tau), features=((0.0, math.sqrt(2.0 * tau)),),
            quantile=lambda levels, upper: ls * _radial_gamma_quantile(N, tau)(levels, upper),
            params=params,
        )

    # interval model: spectral series, clipped at the truncation level
    theta_s = src[0]
    C = space.mass_scale
    peak = float(interval_kernel_terms(N, theta_s, theta_s, tau)[0][0])
    floor = 1e-14 * peak

    def value(u):
        p = interval_kernel_terms(N, theta_s, u, tau)[0]
        p = np.where(p > floor, p, 0.0) / C
        return p if np.ndim(u) else float(p[0])

    def score(u):
        p, dp, _dt = interval_kernel_terms(N, theta_s, u, tau, order=1)
        out = np.where(p > floor, dp / np.where(p > floor, p, 1.0), 0.0) / ls
        return out if np.ndim(u) else float(out[0])

    return Density(
        "heat_kernel", sym, value=value,
        log_value=lambda u: _safe_log(value(u)), score=score,
        features=((theta_s, math.sqrt(2.0 * tau)),), params=params,
    )


def bump(space: ModelSpace, center, width: float) -> Density:
    """
    Gaussian-shaped bump exp(-d^2 / 2 width^2) about `center`:
    a shell radius on radial spaces, an on-axis height or (x1, x2) on the half-plane,
    a position on 1-D models (distances throughout).
    """
    if width <= 0:
        raise DomainError("bump width must be positive")
    sym = space.symmetry
    ls = space.length_scale
    s2 = width ** 2
    params = {"center": center, "width": width}

    if sym is Symmetry.RADIAL:
        c = float(center)
        if c < 0:
            raise DomainError("radial bump center is a shell radius >= 0")
        profile = lambda r: np.exp(-np.square(np.asarray(r, dtype=float) - c) / (2.0 * s2))
        tail = GaussianTail(0.5 * s2, c)
        Z = _normalizer(space, profile, tail=tail, points=[c] if c > 0 else [])
        return Density(
            "bump", sym,
            value=lambda r: profile(r) / Z,
            log_value=lambda r: -np.square(np.asarray(r, dtype=float) - c) / (2.0 * s2) - math.log(Z),
            score=lambda r: -(np.asarray(r, dtype=float) - c) / s2,
            tail=tail, features=((c, width),), params=params,
        )

    if sym is Symmetry.AXIAL:
        b1, b2 = space.base_point
        c1, c2 = (b1, float(center)) if np.ndim(center) == 0 else tuple(float(v) for v in center)
        if c2 < 0:
            raise DomainError("bump center must lie in the half-plane")
        su2 = s2 / ls ** 2
        Z = space.mass_scale * 2.0 * math.pi * su2 * special.ndtr(c2 / math.sqrt(su2))

        def log_value(x1, x2):
            return -((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2.0 * su2) - math.log(Z)

        offset = ls * math.hypot(c1 - b1, c2 - b2)
        return Density(
            "bump", sym,
            value=lambda x1, x2: np.exp(log_value(x1, x2)),
            log_value=log_value,
            score=lambda x1, x2: (-(x1 - c1) / (su2 * ls), -(x2 - c2) / (su2 * ls)),
            tail=GaussianTail(0.5 * s2, offset), features=((offset, width),), params=params,
        )

    cu = float(center) / ls
    su2 = s2 / ls ** 2
    lo, hi = space.coordinate_range()
    if not lo <= cu <= hi:
        raise DomainError(f"bump center {center} outside the space")
    profile = lambda u: np.exp(-np.square(np.asarray(u, dtype=float) - cu) / (2.0 * su2))
    tail = None if math.isfinite(hi) else GaussianTail(0.5 * su2, cu)
    Z = _normalizer(space, profile, tail=tail, points=[cu] if cu > 0 else [])
    return Density(
        "bump", sym,
        value=lambda u: profile(u) / Z,
        log_value=lambda u: -np.square(np.asarray(u, dtype=float) - cu) / (2.0 * su2) - math.log(Z),
        score=lambda u: -(np.asarray(u, dtype=float) - cu) / (su2 * ls),
        tail=tail, features=((cu, width / ls),), params=params,
    )


def uniform_ball(space: ModelSpace, radius: float) -> Density:
    """Normalised reference measure restricted to B_radius(base). No derivative rule."""
    if radius <= 0:
        raise DomainError("ball radius must be positive")
    sym = space.symmetry
    vol = ball_volume(space, space.base_point, radius)
    inv = 1.0 / vol
    params = {"radius": radius}

    if sym is Symmetry.RADIAL:
        return Density(
            "uniform_ball", sym,
            value=lambda r: np.where(np.asarray(r, dtype=float) < radius, inv, 0.0),
            support=(0.0, radius), features=((0.5 * radius, radius),),
            quantile=_power_quantile(space.N, radius), params=params,
        )

    ls = space.length_scale
    if sym is Symmetry.AXIAL:
        b1, b2 = space.base_point
        rc = radius / ls
        return Density(
            "uniform_ball", sym,
            value=lambda x1, x2: np.where((x1 - b1) ** 2 + (x2 - b2) ** 2 < rc * rc, inv, 0.0),
            support=(0.0, radius), params=params,
        )

    b = space.base_point[0]
    lo, hi = space.coordinate_range()
    a, z = max(lo, b - radius / ls), min(hi, b + radius / ls)
    quantile = None
    if space.is_cone_type:
        quantile = lambda levels, upper: ls * _power_quantile(space.N, radius / ls)(levels, upper)
    return Density(
        "uniform_ball", sym,
        value=lambda u: np.where((np.asarray(u, dtype=float) >= a) & (np.asarray(u, dtype=float) <= z), inv, 0.0),
        support=(a, z), features=((0.5 * (a + z), z - a),), quantile=quantile, params=params,
    )


def reference(space: ModelSpace) -> Density:
    """The probability-normalised reference measure of the compact interval model."""
    inv = 1.0 / reference_mass(space)
    zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))
    return Density(
        "reference", Symmetry.GENERAL_1D,
        value=lambda u: zero(u) + inv,
        log_value=lambda u: zero(u) + math.log(inv),
        score=zero, features=((0.5 * math.pi, math.pi),), params={},
    )


def mixture(space: ModelSpace, components: Sequence[Density], weights: Sequence[float]) -> Density:
    if len(components) != len(weights) or not components:
        raise DomainError("mixture needs matching, non-empty components and weights")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise DomainError("mixture weights must be non-negative with positive sum")
    w = w / w.sum()
    syms = {c.symmetry for c in components}
    if len(syms) != 1:
        raise DomainError("mixture components must share a symmetry")
    sym = syms.pop()

    def value(*x):
        return sum(wi * c.value(*x) for wi, c in zip(w, components))

    score = None
    if all(c.score is not None for c in components):
        def score(*x):
            v = np.asarray(value(*x), dtype=float)
            safe = np.where(v > RHO_FLOOR, v, 1.0)
            parts = [(wi * np.asarray(c.value(*x), dtype=float), c.score(*x)) for wi, c in zip(w, components)]
            if sym is Symmetry.AXIAL:
                g1 = sum(p * s[0] for p, s in parts)
                g2 = sum(p * s[1] for p, s in parts)
                return np.where(v > RHO_FLOOR, g1 / safe, 0.0), np.where(v > RHO_FLOOR, g2 / safe, 0.0)
            g = sum(p * np.asarray(s, dtype=float) for p, s in parts)
            return np.where(v > RHO_FLOOR, g / safe, 0.0)

    supports = [c.support for c in components]
    support = None
    tail = GaussianTail.cover(c.tail for c in components)
    features = [f for c in components for f in c.features]
    if all(s is not None for s in supports):
        support = (min(s[0] for s in supports), max(s[1] for s in supports))
    else:
        # compact parts ride inside the tail bound; its center must reach their far edge
        edges = [s for s in supports if s is not None and math.isfinite(s[1])]
        reach = max((s[1] for s in edges), default=0.0)
        if tail is not None and reach > abs(tail.center):
            tail = GaussianTail(tail.scale, reach)
        features.extend((s[1], 0.25 * (s[1] - s[0])) for s in edges)
    return Density(
        "mixture", sym, value=value,
        log_value=lambda *x: _safe_log(value(*x)), score=score,
        tail=tail, support=support,
        features=tuple(features),
        params={"components": [dict(c.params, family=c.family) for c in components],
                "weights": [float(x) for x in w]},
    )


def _unsupported(family: str, space: ModelSpace):
    raise DomainError(f"{family} is not offered on {space.kind.value}")


# ---- Config entry point ------------------------------------------------------
def build_density(space: ModelSpace, spec: Mapping[str, Any]) -> Density:
    """Density from a config entry like {"family": "bump", "center": 1.0, "width": 0.3}."""
    family = str(spec.get("family", "")).lower()
    try:
        if family == "gaussian":
            return gaussian(space, float(spec["t"]))
        if family == "heat_kernel":
            return heat_kernel(space, float(spec["t"]), spec.get("source"))
        if family == "bump":
            center = spec.get("center", 0.0)
            center = [float(v) for v in center] if isinstance(center, (list, tuple)) else float(center)
            return bump(space, center, float(spec["width"]))
        if family == "uniform_ball":
            return uniform_ball(space, float(spec["radius"]))
        if family == "reference":
            return reference(space)
        if family == "mixture":
            parts = [build_density(space, c) for c in spec.get("components", [])]
            weights = spec.get("weights") or [1.0] * len(parts)
            return mixture(space, parts, weights)
    except KeyError as exc:
        raise DomainError(f"{family} needs parameter {exc.args[0]!r}") from exc
    raise DomainError(f"unknown density family {spec.get('family')!r}; expected one of {', '.join(FAMILIES)}")

# heatlab/services/quadrature.py
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.integrate import IntegrationWarning

from heatlab.services.conf import lab_setting
from heatlab.services.errors import DomainError, IllConditioned, NonConvergent
from heatlab.services.model_spaces import ModelSpace, SpaceKind, Symmetry

log = logging.getLogger(__name__)

# exp(-40) keeps the neglected tail well below 1e-12 even with polynomial weights
TAIL_LOG_MASS = 40.0


# ---- Result types ------------------------------------------------------------
@dataclass(frozen=True)
class QuadTolerance:
    abs_tol: float
    rel_tol: float
    max_evals: int

    @classmethod
    def from_settings(cls, overrides: dict | None = None) -> "QuadTolerance":
        cfg = dict(lab_setting("quad", {}))
        cfg.update(overrides or {})
        return cls(float(cfg["abs_tol"]), float(cfg["rel_tol"]), int(cfg["max_evals"]))

    @property
    def limit(self) -> int:
        # QUADPACK spends 21 evaluations per subinterval
        return max(50, self.max_evals // 21)


@dataclass
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int

    def __add__(self, other: "QuadResult") -> "QuadResult":
        return QuadResult(self.value + other.value,
                          self.error_estimate + other.error_estimate,
                          self.evaluations + other.evaluations)


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    exponent_used: float
    residual: float


@dataclass(frozen=True)
class GaussianTail:
    """Declared bound |f(r)| <~ exp(-(r - center)^2 / (4 scale)) for r beyond center."""
    scale: float
    center: float = 0.0

    def radius(self, weight_power: float = 0.0) -> float:
        width = 2.0 * math.sqrt(self.scale)
        extra = max(weight_power, 0.0) * math.log1p(abs(self.center) + 12.0 * width)
        return abs(self.center) + width * math.sqrt(TAIL_LOG_MASS + extra)

    @staticmethod
    def cover(tails: Iterable["GaussianTail | None"]) -> "GaussianTail | None":
        tails = [t for t in tails if t is not None]
        if not tails:
            return None
        return GaussianTail(max(t.scale for t in tails), max(abs(t.center) for t in tails))


# ---- QUADPACK wrappers -------------------------------------------------------
def _quad(func: Callable[[float], float], a: float, b: float, tol: QuadTolerance, **kw) -> QuadResult:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        out = integrate.quad(func, a, b, epsabs=tol.abs_tol, epsrel=tol.rel_tol,
                             limit=tol.limit, full_output=1, **kw)
    value, err, info = float(out[0]), float(out[1]), out[2]
    if len(out) > 3 or caught:
        msg = str(out[3]) if len(out) > 3 else str(caught[0].message)
        target = max(tol.abs_tol, tol.rel_tol * abs(value))
        if err > 100.0 * target or not math.isfinite(value):
            raise NonConvergent(f"quadrature on [{a:.6g}, {b:.6g}] stalled: {msg.strip()[:200]} (error {err:.3g})")
        log.warning("quadrature on [%.6g, %.6g] accepted near tolerance: %s", a, b, msg.strip()[:200])
    return QuadResult(value, err, int(info.get("neval", 0)))


def _is_whole(p: float) -> bool:
    return p >= 0 and float(p).is_integer()


def integrate_radial(
    f: Callable[[float], float],
    weight_power: float,
    domain: float | tuple[float, float] = math.inf,
    *,
    tail: GaussianTail | None = None,
    points: Sequence[float] = (),
    tol: QuadTolerance | None = None,
) -> QuadResult:
    """
    int f(r) r^weight_power dr over [0, R] or [0, inf).
    The infinite case is cut where the declared Gaussian tail drops below exp(-40).
    The r^p endpoint factor goes to QUADPACK's algebraic-weight rule when p is fractional.
    """
    tol = tol or QuadTolerance.from_settings()
    lo, hi = (0.0, float(domain)) if np.isscalar(domain) else (float(domain[0]), float(domain[1]))
    p = float(weight_power)
    if p <= -1.0:
        raise DomainError(f"r^{p} is not integrable at the origin")
    if math.isinf(hi):
        if tail is None:
            raise DomainError("an infinite radial domain needs a declared Gaussian tail")
        hi = tail.radius(p)
    if hi <= lo:
        return QuadResult(0.0, 0.0, 0)

    brk = sorted(float(x) for x in points if lo < x < hi)
    if lo > 0.0:
        return _quad(lambda r: f(r) * r ** p, lo, hi, tol, points=brk or None)

    head = hi
    if tail is not None:
        head = min(head, 2.0 * math.sqrt(tail.scale))
    if brk:
        head = min(head, brk[0])
    if _is_whole(p):
        result = _quad(lambda r: f(r) * r ** p, 0.0, head, tol)
    else:
        result = _quad(f, 0.0, head, tol, weight="alg", wvar=(p, 0.0))
    if head < hi:
        rest = [x for x in brk if x > head]
        result = result + _quad(lambda r: f(r) * r ** p, head, hi, tol, points=rest or None)
    return result


def integrate_interval(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    wvar: tuple[float, float] | None = None,
    points: Sequence[float] = (),
    tol: QuadTolerance | None = None,
) -> QuadResult:
    """int_a^b f; with wvar=(p, q) the factor (x-a)^p (b-x)^q is integrated exactly."""
    tol = tol or QuadTolerance.from_settings()
    if wvar is not None and (wvar[0] != 0.0 or wvar[1] != 0.0):
        return _quad(f, a, b, tol, weight="alg", wvar=wvar)
    brk = sorted(float(x) for x in points if a < x < b)
    return _quad(f, a, b, tol, points=brk or None)


# ---- 2-D polar rule ----------------------------------------------------------
def _angular_panels(space: ModelSpace, r: float) -> list[tuple[float, float]]:
    if space.kind is SpaceKind.HALF_SPACE_2D:
        b2 = space.base_point[1]
        if r <= b2:
            return [(-0.5 * math.pi, 0.5 * math.pi), (0.5 * math.pi, 1.5 * math.pi)]
        psi0 = math.asin(b2 / r)
        return [(-psi0, 0.5 * math.pi), (0.5 * math.pi, math.pi + psi0)]
    q = 0.5 * math.pi
    return [(-math.pi, -q), (-q, 0.0), (0.0, q), (q, math.pi)]


def integrate_2d(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    space: ModelSpace,
    *,
    tail: GaussianTail | None = None,
    support: float | None = None,
    points: Sequence[float] = (),
    tol: QuadTolerance | None = None,
    inner_nodes: int = 48,
) -> QuadResult:
    """
    Integrate f against the reference measure of a 2-D space, in polar form about
    the base point (the pole on cones).
    f takes coordinates: (x1, x2) on the half-plane and the plane, (r, phi) on a cone.
    It may return shape (n,) or (k, n); the value then has shape (k,).
    `tail` / `support` are in distance units; `points` are radii where f has structure.
    """
    tol = tol or QuadTolerance.from_settings()
    planar = space.kind is SpaceKind.HALF_SPACE_2D or (space.kind is SpaceKind.EUCLIDEAN and space.N == 2)
    cone = space.kind is SpaceKind.CONE and space.cross_section == "circle"
    if not (planar or cone):
        raise DomainError(f"integrate_2d does not handle {space.kind.value} (N={space.N})")
    if support is not None:
        R = support
    elif tail is not None:
        R = tail.radius(1.0)
    else:
        raise DomainError("integrate_2d needs a support radius or a Gaussian tail")
    ls = space.length_scale
    R_c = R / ls
    pts = sorted(x / ls for x in points if 0.0 < x / ls < R_c)
    if space.kind is SpaceKind.HALF_SPACE_2D and 0.0 < space.base_point[1] < R_c:
        pts = sorted(set(pts) | {space.base_point[1]})

    fine_x, fine_w = np.polynomial.legendre.leggauss(inner_nodes)
    coarse_x, coarse_w = np.polynomial.legendre.leggauss(inner_nodes // 2)
    b1, b2 = (space.base_point if planar else (0.0, 0.0))

    def panel(r: float, lo: float, hi: float, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        half = 0.5 * (hi - lo)
        psi = lo + half * (x + 1.0)
        if planar:
            vals = f(b1 + r * np.cos(psi), np.maximum(b2 + r * np.sin(psi), 0.0))
        else:
            vals = f(np.full_like(psi, r), psi)
        return np.sum(np.asarray(vals, dtype=float) * w, axis=-1) * half

    def angular(r: float) -> np.ndarray:
        panels = _angular_panels(space, r)
        fine = sum(panel(r, lo, hi, fine_x, fine_w) for lo, hi in panels)
        coarse = sum(panel(r, lo, hi, coarse_x, coarse_w) for lo, hi in panels)
        jac = r if planar else space.rho * r ** (space.N - 1.0)
        return np.stack([np.asarray(fine), np.asarray(coarse)]) * jac

    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", IntegrationWarning)
        res, err, info = integrate.quad_vec(
            angular, 0.0, R_c, epsabs=tol.abs_tol, epsrel=tol.rel_tol,
            limit=tol.limit, points=pts or None, full_output=True,
        )
    if not info.success:
        target = max(tol.abs_tol, tol.rel_tol * float(np.max(np.abs(res[0]))))
        if err > 100.0 * target:
            raise NonConvergent(f"2-D quadrature stalled: {info.message} (error {err:.3g})")
        log.warning("2-D quadrature accepted near tolerance: %s", info.message)
    C = space.mass_scale
    value = res[0] * C
    inner = float(np.max(np.abs(res[0] - res[1]))) * C
    value = float(value) if np.ndim(value) == 0 else value
    return QuadResult(value, float(err) * C + inner, int(info.neval) * inner_nodes * 3)


# ---- Small-parameter limits --------------------------------------------------
def limit_extrapolate(
    samples: Sequence[tuple[float, float]],
    exponent_bounds: tuple[float, float] = (0.0, 4.0),
) -> LimitEstimate:
    """
    Fit v(t) = L + a t^q to samples taken as t decreases toward 0 and return L.
    q comes from a profile least-squares search over the open exponent range; a fit
    that runs into either end of the range is reported as ill-conditioned.
    """
    pairs = sorted(((float(t), float(v)) for t, v in samples), key=lambda tv: -tv[0])
    if len(pairs) < 4:
        raise DomainError("limit extrapolation needs at least 4 samples")
    t = np.array([tv[0] for tv in pairs])
    v = np.array([tv[1] for tv in pairs])
    if np.any(t <= 0) or np.any(np.diff(t) >= 0):
        raise DomainError("sample times must be positive and distinct")
    scale = max(float(np.max(np.abs(v))), 1e-300)
    if float(np.ptp(v)) <= 1e-12 * scale:
        return LimitEstimate(float(np.mean(v)), 1.0, float(np.ptp(v)))

    tau = t / t[0]

    def fit(q: float) -> tuple[np.ndarray, float]:
        X = np.column_stack([np.ones_like(tau), tau ** q])
        coef, *_ = np.linalg.lstsq(X, v, rcond=None)
        return coef, float(np.linalg.norm(X @ coef - v))

    lo, hi = exponent_bounds
    res = optimize.minimize_scalar(lambda q: fit(q)[1], bounds=(lo + 1e-6, hi - 1e-6),
                                   method="bounded", options={"xatol": 1e-10})
    q = float(res.x)
    if q <= lo + 1e-3 or q >= hi - 1e-3:
        raise IllConditioned(f"fitted exponent {q:.4g} sits on the edge of ({lo:g}, {hi:g})")
    coef, resid = fit(q)
    return LimitEstimate(float(coef[0]), q, resid / math.sqrt(len(v)))


def sqrt_scaled_integral(g: Callable[[float], float], t: float, tol: QuadTolerance | None = None) -> float:
    """(1/sqrt t) int_0^t ds / g(s), evaluated after s = u^2 so g ~ A sqrt(s) stays regular."""
    if t <= 0:
        raise DomainError("t must be positive")
    tol = tol or QuadTolerance.from_settings()
    root = math.sqrt(t)
    res = _quad(lambda u: 2.0 * u / g(u * u), 0.0, root, tol)
    return res.value / root


# ---- Reference-measure dispatch ----------------------------------------------
def integrate_measure(
    f: Callable,
    space: ModelSpace,
    *,
    tail: GaussianTail | None = None,
    support: float | tuple[float, float] | None = None,
    points: Sequence[float] = (),
    tol: QuadTolerance | None = None,
) -> QuadResult:
    """
    int f dm under the symmetry the lab uses on `space`:
    - radial about the base: f(r) with r the distance, spheres carrying N v1 r^{N-1}
    - axial half-plane: f(x1, x2) through integrate_2d
    - 1-D models: f(u) on the coordinate, weight C m_Y u^{N-1} or C sin^{N-1} u
    Tails, supports and points use the same coordinate as f (distance for the
    radial and axial cases).
    """
    sym = space.symmetry
    if sym is Symmetry.RADIAL:
        if isinstance(support, tuple):
            dom = (max(float(support[0]), 0.0), float(support[1]))
        else:
            dom = math.inf if support is None else support
        res = integrate_radial(f, space.N - 1.0, dom, tail=tail, points=points, tol=tol)
        k = space.radial_mass
        return QuadResult(res.value * k, res.error_estimate * k, res.evaluations)
    if sym is Symmetry.AXIAL:
        R = support[1] if isinstance(support, tuple) else support
        return integrate_2d(f, space, tail=tail, support=R, points=points, tol=tol)

    C = space.mass_scale
    N = space.N
    if space.kind is SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
        lo, hi = (0.0, math.pi) if support is None else support
        lo, hi = max(lo, 0.0), min(hi, math.pi)
        if hi <= lo:
            return QuadResult(0.0, 0.0, 0)
        p = N - 1.0 if lo == 0.0 else 0.0
        q = N - 1.0 if hi == math.pi else 0.0

        def g(u: float) -> float:
            # sin^{N-1} with the endpoint powers handed to the weight rule; QAWS
            # samples the endpoints, so the quotients go through sinc
            left = np.sinc(u / math.pi)           # sin(u) / u
            right = np.sinc(1.0 - u / math.pi)    # sin(u) / (pi - u)
            if p and q:
                base = (left + right) / math.pi   # sin(u) / (u (pi - u))
            elif p:
                base = left
            elif q:
                base = right
            else:
                base = math.sin(u)
            return f(u) * base ** (N - 1.0)

        if p or q:
            res = integrate_interval(g, lo, hi, wvar=(p, q), tol=tol)
        else:
            res = integrate_interval(g, lo, hi, points=points, tol=tol)
        return QuadResult(res.value * C, res.error_estimate * C, res.evaluations)

    m_y = space.cross_section_mass
    if support is not None:
        lo, hi = support if isinstance(support, tuple) else (0.0, support)
    else:
        lo, hi = 0.0, math.inf
    res = integrate_radial(f, N - 1.0, (lo, hi), tail=tail, points=points, tol=tol)
    return QuadResult(res.value * m_y * C, res.error_estimate * m_y * C, res.evaluations)

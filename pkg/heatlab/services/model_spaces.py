# heatlab/services/model_spaces.py
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np
from scipy import integrate, special

from heatlab.services.errors import DomainError, NonConvergent, PoleOnly

log = logging.getLogger(__name__)

Point = tuple[float, ...]

SQRT_PI_E = math.sqrt(math.pi * math.e)

# Relative size of the first neglected term of the spectral series.
SPECTRAL_TOL = 1e-16
SPECTRAL_MAX_TERMS = 20_000


class SpaceKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HALF_SPACE_2D = "half_space_2d"
    CONE = "cone"
    WEIGHTED_HALF_LINE = "weighted_half_line"
    WEIGHTED_INTERVAL_POSITIVE_K = "weighted_interval_positive_k"


class Symmetry(str, Enum):
    RADIAL = "radial_about_base"
    AXIAL = "axial_half_space"
    GENERAL_1D = "general_1d"


_KIND_ALIASES = {
    "euclidean": SpaceKind.EUCLIDEAN,
    "rn": SpaceKind.EUCLIDEAN,
    "halfspace2d": SpaceKind.HALF_SPACE_2D,
    "halfplane": SpaceKind.HALF_SPACE_2D,
    "cone": SpaceKind.CONE,
    "weightedhalfline": SpaceKind.WEIGHTED_HALF_LINE,
    "halfline": SpaceKind.WEIGHTED_HALF_LINE,
    "weightedintervalpositivek": SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K,
    "interval": SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K,
}


# ---- Constants ---------------------------------------------------------------
def omega(N: float) -> float:
    """Volume of the unit ball in dimension N, pi^{N/2} / Gamma(1 + N/2)."""
    return math.exp(0.5 * N * math.log(math.pi) - special.gammaln(1.0 + 0.5 * N))


def cone_kernel_constant(N: float, v1: float) -> float:
    """Prefactor c of the pole kernel c t^{-N/2} exp(-d^2/4t) on a cone with unit-ball mass v1."""
    return math.exp((1.0 - N) * math.log(2.0) - math.log(N * v1) - special.gammaln(0.5 * N))


# ---- Space -------------------------------------------------------------------
@dataclass(frozen=True)
class ModelSpace:
    kind: SpaceKind
    N: float
    K: float = 0.0
    base_point: Point = ()
    cross_section: str = "none"      # sphere | half_circle | circle | point | none
    cross_section_mass: float = 0.0  # m_Y(Y) of the unscaled space
    rho: float | None = None         # circle radius for cones over a circle
    length_scale: float = 1.0        # distance multiplied by this
    mass_scale: float = 1.0          # reference measure multiplied by this

    @property
    def v1(self) -> float:
        return ball_volume(self, self.base_point, 1.0)

    @property
    def regular_base(self) -> bool:
        return is_regular_point(self, self.base_point)

    @property
    def density_scale(self) -> float:
        # m(B_r) of the rescaled space vs the unscaled one at matching radii
        return self.mass_scale * self.length_scale ** (-self.N)

    @property
    def is_cone_type(self) -> bool:
        return self.kind in (SpaceKind.CONE, SpaceKind.WEIGHTED_HALF_LINE)

    @property
    def dim(self) -> int:
        if self.kind is SpaceKind.EUCLIDEAN:
            return int(self.N)
        if self.kind is SpaceKind.HALF_SPACE_2D or self.cross_section == "circle":
            return 2
        return 1

    @property
    def pole(self) -> Point:
        if not self.is_cone_type:
            raise DomainError(f"{self.kind.value} has no pole")
        return (0.0,) * self.dim

    @property
    def symmetry(self) -> Symmetry:
        """Symmetry class of the measures the lab builds on this space."""
        if self.kind is SpaceKind.EUCLIDEAN or self.cross_section == "circle":
            return Symmetry.RADIAL
        if self.kind is SpaceKind.HALF_SPACE_2D:
            return Symmetry.AXIAL
        return Symmetry.GENERAL_1D

    @property
    def kernel_everywhere(self) -> bool:
        """Whether heat_kernel accepts any source point, not only the pole."""
        return not self.is_cone_type

    @property
    def radial_mass(self) -> float:
        """N * v1 for the kinds whose spheres about the base carry N v1 r^{N-1}."""
        return self.N * self.v1

    def unit_weight(self, u):
        """Reference density along the 1-D coordinate (before mass_scale)."""
        u = np.asarray(u, dtype=float)
        if self.kind is SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
            return np.sin(u) ** (self.N - 1.0)
        if self.symmetry is Symmetry.GENERAL_1D:
            return self.cross_section_mass * u ** (self.N - 1.0)
        raise DomainError(f"{self.kind.value} has no 1-D coordinate weight")

    def coordinate_range(self) -> tuple[float, float]:
        if self.kind is SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
            return 0.0, math.pi
        return 0.0, math.inf


def _canon_kind(raw: Any) -> SpaceKind:
    if isinstance(raw, SpaceKind):
        return raw
    key = str(raw or "").lower().replace("_", "").replace("-", "").replace(" ", "")
    if key not in _KIND_ALIASES:
        raise DomainError(f"unknown space kind {raw!r}")
    return _KIND_ALIASES[key]


def _num(d: Mapping[str, Any], key: str, default: float | None = None) -> float:
    if key not in d or d[key] is None:
        if default is None:
            raise DomainError(f"missing parameter {key!r}")
        return float(default)
    try:
        return float(d[key])
    except (TypeError, ValueError) as exc:
        raise DomainError(f"parameter {key!r} is not a number: {d[key]!r}") from exc


def make_space(descriptor: Mapping[str, Any]) -> ModelSpace:
    """
    Build a ModelSpace from a descriptor such as {"kind": "cone", "N": 2, "rho": 0.5}.
    - euclidean: integer N >= 1, optional base (defaults to the origin)
    - half_space_2d: N = 2, optional base (x1, x2) with x2 >= 0
    - cone: N > 1 and either rho in (0, 1] (circle section) or v1 (one-point section)
    - weighted_half_line: cone over one point with unit section mass (v1 = 1/N)
    - weighted_interval_positive_k: ([0, pi], sin^{N-1}), K defaults to N - 1
    Optional length_scale / mass_scale give the space (X, r d, C m).
    """
    d = dict(descriptor)
    kind = _canon_kind(d.get("kind"))
    N = _num(d, "N", 2.0 if kind is SpaceKind.HALF_SPACE_2D else None)
    K = _num(d, "K", 0.0)

    if kind is not SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K and K != 0.0:
        raise DomainError(f"{kind.value} has K = 0; got K = {K}")

    if kind is SpaceKind.EUCLIDEAN:
        if N < 1 or not float(N).is_integer():
            raise DomainError(f"euclidean needs an integer N >= 1, got {N}")
        n = int(N)
        base = tuple(float(v) for v in d.get("base", (0.0,) * n))
        if len(base) != n:
            raise DomainError(f"base point needs {n} coordinates")
        space = ModelSpace(kind, float(n), 0.0, base, "sphere", n * omega(n))

    elif kind is SpaceKind.HALF_SPACE_2D:
        if N != 2.0:
            raise DomainError(f"half_space_2d is two-dimensional, got N = {N}")
        base = tuple(float(v) for v in d.get("base", (0.0, 0.0)))
        if len(base) != 2 or base[1] < 0:
            raise DomainError(f"half-plane base must be (x1, x2) with x2 >= 0, got {base}")
        space = ModelSpace(kind, 2.0, 0.0, base, "half_circle", math.pi)

    elif kind is SpaceKind.CONE:
        if N <= 1:
            raise DomainError(f"cone needs N > 1, got {N}")
        if "v1" in d and "rho" not in d:
            v1 = _num(d, "v1")
            if v1 <= 0:
                raise DomainError("v1 must be positive")
            space = ModelSpace(kind, N, 0.0, (0.0,), "point", N * v1)
        else:
            rho = _num(d, "rho", 1.0)
            if not 0.0 < rho <= 1.0:
                raise DomainError(f"cross-section radius must lie in (0, 1], got {rho}")
            space = ModelSpace(kind, N, 0.0, (0.0, 0.0), "circle", 2.0 * math.pi * rho, rho=rho)

    elif kind is SpaceKind.WEIGHTED_HALF_LINE:
        # N = 1 is the plain half-line with dr
        if N < 1:
            raise DomainError(f"weighted half-line needs N >= 1, got {N}")
        space = ModelSpace(kind, N, 0.0, (0.0,), "point", 1.0)

    else:
        if N <= 1:
            raise DomainError(f"interval model needs N > 1, got {N}")
        K = _num(d, "K", N - 1.0)
        if not 0.0 < K <= N - 1.0 + 1e-12:
            raise DomainError(f"interval model carries 0 < K <= N - 1, got K = {K}")
        base = tuple(float(v) for v in d.get("base", (math.pi / 2,)))
        if len(base) != 1 or not 0.0 <= base[0] <= math.pi:
            raise DomainError(f"interval base must lie in [0, pi], got {base}")
        space = ModelSpace(kind, N, K, base, "none", 0.0)

    ls = _num(d, "length_scale", 1.0)
    C = _num(d, "mass_scale", 1.0)
    if ls <= 0 or C <= 0:
        raise DomainError("length_scale and mass_scale must be positive")
    space = replace(space, length_scale=ls, mass_scale=C)
    log.debug("space %s N=%g K=%g base=%s", space.kind.value, space.N, space.K, space.base_point)
    return space


def rescale(space: ModelSpace, r: float, C: float) -> ModelSpace:
    """The space (X, r d, C m); kernels obey p'(x, y, t) = C^{-1} p(x, y, t / r^2)."""
    if r <= 0 or C <= 0:
        raise DomainError("rescaling factors must be positive")
    return replace(space, length_scale=space.length_scale * r, mass_scale=space.mass_scale * C)


def describe(space: ModelSpace) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": space.kind.value, "N": space.N, "K": space.K,
                           "base": list(space.base_point)}
    if space.rho is not None:
        out["rho"] = space.rho
    if space.kind is SpaceKind.CONE and space.cross_section == "point":
        out["v1_unscaled"] = space.cross_section_mass / space.N
    if space.length_scale != 1.0 or space.mass_scale != 1.0:
        out["length_scale"] = space.length_scale
        out["mass_scale"] = space.mass_scale
    out["v1"] = space.v1
    out["avr"] = avr(space)
    out["regular_base"] = space.regular_base
    return out


# ---- Points & distance -------------------------------------------------------
def check_point(space: ModelSpace, x) -> Point:
    p = tuple(float(v) for v in (x if np.ndim(x) else (x,)))
    if len(p) != space.dim:
        raise DomainError(f"{space.kind.value} points have {space.dim} coordinate(s), got {p}")
    if space.kind is SpaceKind.HALF_SPACE_2D and p[1] < -1e-15:
        raise DomainError(f"point {p} lies below the half-plane")
    if space.is_cone_type and p[0] < 0:
        raise DomainError(f"negative cone radius in {p}")
    if space.kind is SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K and not -1e-15 <= p[0] <= math.pi + 1e-15:
        raise DomainError(f"point {p} outside [0, pi]")
    return p


def is_pole(space: ModelSpace, x: Point) -> bool:
    return space.is_cone_type and x[0] == 0.0


def _cross_angle(space: ModelSpace, phi1: float, phi2: float) -> float:
    a = abs(phi1 - phi2) % (2.0 * math.pi)
    return min(space.rho * min(a, 2.0 * math.pi - a), math.pi)


def _base_distance(space: ModelSpace, x: Point, y: Point) -> float:
    if space.kind in (SpaceKind.EUCLIDEAN, SpaceKind.HALF_SPACE_2D):
        return math.dist(x, y)
    if space.cross_section == "circle":
        r1, r2 = x[0], y[0]
        delta = _cross_angle(space, x[1], y[1])
        return math.sqrt(max(r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * math.cos(delta), 0.0))
    return abs(x[0] - y[0])


def distance(space: ModelSpace, x, y) -> float:
    x = check_point(space, x)
    y = check_point(space, y)
    return space.length_scale * _base_distance(space, x, y)


# ---- Heat kernels ------------------------------------------------------------
def _spectral_weights(N: float, t: float) -> tuple[np.ndarray, float]:
    """exp(-k(k+N-1)t) / ||C_k||^2 for the retained Gegenbauer modes, plus lambda."""
    lam = 0.5 * (N - 1.0)
    need = -math.log(SPECTRAL_TOL) / t
    k_top = int(math.ceil(0.5 * (-(N - 1.0) + math.sqrt((N - 1.0) ** 2 + 4.0 * need)))) + 1
    if k_top > SPECTRAL_MAX_TERMS:
        raise NonConvergent(f"spectral kernel at t={t:g} needs {k_top} terms")
    k = np.arange(k_top + 1, dtype=float)
    log_norm = (math.log(math.pi) + (1.0 - 2.0 * lam) * math.log(2.0)
                + special.gammaln(k + 2.0 * lam) - special.gammaln(k + 1.0)
                - np.log(k + lam) - 2.0 * special.gammaln(lam))
    return np.exp(-k * (k + N - 1.0) * t - log_norm), lam


def interval_kernel_terms(N: float, x: float, y, t: float, order: int = 0):
    """
    Spectral heat kernel of ([0, pi], sin^{N-1} dtheta) from source x, in base units.
    Returns (p, dp/dy, d2p/dy2, dp/dt) truncated to `order` y-derivatives;
    dp/dt is always returned last.
    """
    w, lam = _spectral_weights(N, t)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = np.arange(w.size)[:, None]  # integer degrees select the recurrence in scipy
    k = n.astype(float)
    zx = math.cos(x)
    zy = np.cos(y)[None, :]
    phi_x = special.eval_gegenbauer(n, lam, zx)
    coef = w[:, None] * phi_x
    phi_y = special.eval_gegenbauer(n, lam, zy)
    p = np.sum(coef * phi_y, axis=0)
    eig = (k * (k + N - 1.0))
    dt = -np.sum(eig * coef * phi_y, axis=0)
    out = [p]
    if order >= 1:
        # d/dtheta C_k^lam(cos theta) = -2 lam sin(theta) C_{k-1}^{lam+1}(cos theta)
        g1 = np.where(n >= 1, special.eval_gegenbauer(np.maximum(n - 1, 0), lam + 1.0, zy), 0.0)
        s = np.sin(y)[None, :]
        out.append(np.sum(coef * (-2.0 * lam * s * g1), axis=0))
        if order >= 2:
            g2 = np.where(n >= 2, special.eval_gegenbauer(np.maximum(n - 2, 0), lam + 2.0, zy), 0.0)
            d2 = -2.0 * lam * zy * g1 + 4.0 * lam * (lam + 1.0) * s * s * g2
            out.append(np.sum(coef * d2, axis=0))
    out.append(dt)
    return tuple(out)


def _kernel_base(space: ModelSpace, x: Point, y: Point, t: float) -> float:
    N = space.N
    if space.kind is SpaceKind.EUCLIDEAN:
        d2 = _base_distance(space, x, y) ** 2
        return (4.0 * math.pi * t) ** (-0.5 * N) * math.exp(-d2 / (4.0 * t))
    if space.kind is SpaceKind.HALF_SPACE_2D:
        d2 = (x[0] - y[0]) ** 2 + (x[1] - y[1]) ** 2
        d2r = (x[0] - y[0]) ** 2 + (x[1] + y[1]) ** 2
        return (math.exp(-d2 / (4.0 * t)) + math.exp(-d2r / (4.0 * t))) / (4.0 * math.pi * t)
    if space.is_cone_type:
        if not (is_pole(space, x) or is_pole(space, y)):
            raise PoleOnly(f"the {space.kind.value} kernel is only available from the pole")
        r = y[0] if is_pole(space, x) else x[0]
        c = cone_kernel_constant(N, space.cross_section_mass / N)
        return c * t ** (-0.5 * N) * math.exp(-r * r / (4.0 * t))
    p = interval_kernel_terms(N, x[0], y[0], t)[0]
    return float(p[0])


def heat_kernel(space: ModelSpace, x, y, t: float) -> float:
    if t <= 0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    x = check_point(space, x)
    y = check_point(space, y)
    t_base = t / space.length_scale ** 2
    return _kernel_base(space, x, y, t_base) / space.mass_scale


def heat_equation_residual(space: ModelSpace, x, y, t: float, h: float = 1e-4) -> tuple[float, float]:
    """
    dp/dt - Laplacian_y p for the spectral kernel (unscaled interval model).
    The time derivative comes from a central difference of relative step h, the
    Laplacian from termwise angular derivatives. Returns (residual, difference bound).
    """
    if space.kind is not SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
        raise DomainError("heat-equation residual is provided for the interval model")
    x = check_point(space, x)[0]
    y = check_point(space, y)[0]
    N = space.N
    p, dp, d2p, dt_series = interval_kernel_terms(N, x, y, t, order=2)
    dt = h * t
    up = interval_kernel_terms(N, x, y, t + dt)[0][0]
    dn = interval_kernel_terms(N, x, y, t - dt)[0][0]
    dpdt = (up - dn) / (2.0 * dt)
    lap = d2p[0] + (N - 1.0) * math.cos(y) / math.sin(y) * dp[0]
    bound = abs(dpdt - dt_series[0]) + 1e-12 * (abs(p[0]) + abs(dt_series[0]))
    return float(dpdt - lap), float(bound)


# ---- Volumes -----------------------------------------------------------------
def _ball_base(space: ModelSpace, x: Point, r: float) -> float:
    N = space.N
    if r == 0.0:
        return 0.0
    if space.kind is SpaceKind.EUCLIDEAN:
        return omega(N) * r ** N
    if space.kind is SpaceKind.HALF_SPACE_2D:
        a = x[1]
        if r <= a:
            return math.pi * r * r
        # disk minus the circular segment below the boundary line
        return math.pi * r * r - (r * r * math.acos(a / r) - a * math.sqrt(r * r - a * a))
    if space.is_cone_type:
        s = x[0]
        m_y = space.cross_section_mass
        if s == 0.0:
            return m_y / N * r ** N
        if space.cross_section == "point":
            return m_y / N * ((s + r) ** N - max(0.0, s - r) ** N)

        def slice_mass(u: float) -> float:
            if u <= 0.0:
                return 0.0
            cos_arg = (u * u + s * s - r * r) / (2.0 * u * s)
            delta = math.acos(min(1.0, max(-1.0, cos_arg)))
            return u ** (N - 1.0) * min(2.0 * delta, m_y)

        lo, hi = max(0.0, s - r), s + r
        pts = [r - s] if lo < r - s < hi else None
        val, _err = integrate.quad(slice_mass, lo, hi, points=pts, limit=200, epsabs=1e-13, epsrel=1e-11)
        return val
    th = x[0]
    lo, hi = max(0.0, th - r), min(math.pi, th + r)
    val, _err = integrate.quad(lambda u: math.sin(u) ** (N - 1.0), lo, hi, epsabs=1e-14, epsrel=1e-12)
    return val


def ball_volume(space: ModelSpace, x, r: float) -> float:
    if r < 0:
        raise DomainError(f"negative radius {r}")
    x = check_point(space, x)
    return space.mass_scale * _ball_base(space, x, r / space.length_scale)


def reference_mass(space: ModelSpace) -> float:
    """Total reference mass of the compact interval model."""
    if space.kind is not SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K:
        raise DomainError(f"{space.kind.value} has infinite reference mass")
    N = space.N
    raw = math.sqrt(math.pi) * math.exp(special.gammaln(0.5 * N) - special.gammaln(0.5 * (N + 1.0)))
    return space.mass_scale * raw


def avr(space: ModelSpace) -> float:
    if space.kind is SpaceKind.EUCLIDEAN:
        return space.density_scale
    if space.kind is SpaceKind.HALF_SPACE_2D:
        return 0.5 * space.density_scale
    if space.is_cone_type:
        return space.cross_section_mass / space.N / omega(space.N) * space.density_scale
    return 0.0


def point_density(space: ModelSpace, x) -> float:
    """lim m(B_r(x)) / (omega_N r^N) as r -> 0, where the limit is finite and positive."""
    x = check_point(space, x)
    if space.kind is SpaceKind.EUCLIDEAN:
        return space.density_scale
    if space.kind is SpaceKind.HALF_SPACE_2D:
        return space.density_scale * (0.5 if x[1] == 0.0 else 1.0)
    if space.is_cone_type:
        if is_pole(space, x):
            return avr(space)
        if space.cross_section == "circle" and space.N == 2.0:
            return space.density_scale  # locally flat off the pole
        raise DomainError("volume density is degenerate away from the pole")
    raise DomainError("the interval model is collapsed; volume density is degenerate")


def is_regular_point(space: ModelSpace, x) -> bool:
    try:
        return abs(point_density(space, x) - 1.0) < 1e-12
    except DomainError:
        return False


def is_regular_up_to_scale(space: ModelSpace, x) -> bool:
    """x is a density-1 point once the (r d, C m) rescaling is undone."""
    try:
        return abs(point_density(space, x) / space.density_scale - 1.0) < 1e-12
    except DomainError:
        return False


def d0_at(space: ModelSpace, x) -> float:
    """D_0 at x, i.e. sqrt(pi e) times the N-th root of the volume density."""
    return SQRT_PI_E * point_density(space, x) ** (1.0 / space.N)


def expected_c0(space: ModelSpace, x=None) -> float:
    return 1.0 / d0_at(space, space.base_point if x is None else x)

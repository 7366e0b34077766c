# heatlab/services/evi.py
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import special

from heatlab.services import densities
from heatlab.services.conf import lab_setting
from heatlab.services.errors import DegenerateMeasure, DomainError, GridTooCoarse, IllConditioned
from heatlab.services.functionals import (
    ProbMeasure,
    barycenter,
    entropy_result,
    rescaled_entropy,
    second_moment_result,
    u_n,
)
from heatlab.services.model_spaces import (
    SQRT_PI_E,
    ModelSpace,
    Point,
    SpaceKind,
    Symmetry,
    check_point,
    cone_kernel_constant,
    is_regular_point,
    omega,
)
from heatlab.services.quadrature import LimitEstimate, QuadResult, limit_extrapolate
from heatlab.services.transport import w2_squared

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "ent", "u_n", "theta_sq", "F", "F_over_sqrt_t"]


# ---- Helpers -----------------------------------------------------------------
def s_kappa(kappa: float, theta: float) -> float:
    """sin(sqrt(k) theta) / sqrt(k), continued through k = 0 and to k < 0 as sinh."""
    x = kappa * theta * theta
    if abs(x) < 1e-4:
        return theta * (1.0 - x / 6.0 + x * x / 120.0 - x ** 3 / 5040.0)
    if kappa > 0:
        r = math.sqrt(kappa)
        return math.sin(r * theta) / r
    r = math.sqrt(-kappa)
    return math.sinh(r * theta) / r


def geometric_grid(t_min: float | None = None, t_max: float | None = None,
                   points_per_decade: int | None = None) -> np.ndarray:
    t_min = float(t_min if t_min is not None else lab_setting("grid.t_min"))
    t_max = float(t_max if t_max is not None else lab_setting("grid.t_max"))
    ppd = int(points_per_decade if points_per_decade is not None else lab_setting("grid.points_per_decade"))
    if not 0 < t_min < t_max or ppd < 1:
        raise DomainError(f"bad time grid ({t_min}, {t_max}, {ppd} per decade)")
    n = int(round(math.log10(t_max / t_min) * ppd)) + 1
    return np.geomspace(t_min, t_max, max(n, 2))


def _source_space(space: ModelSpace, base: Point) -> ModelSpace:
    # radial Euclidean kernels are written about the base point
    if space.kind is SpaceKind.EUCLIDEAN and base != space.base_point:
        return replace(space, base_point=base)
    return space


def heat_measure(space: ModelSpace, t: float, base=None) -> ProbMeasure:
    """The heat kernel from `base` (default the base point) at time t as a ProbMeasure."""
    x = space.base_point if base is None else check_point(space, base)
    src = _source_space(space, x)
    return ProbMeasure(src, densities.heat_kernel(src, t, x), name=f"heat_kernel(t={t:g})")


# ---- Traces ------------------------------------------------------------------
@dataclass
class EviTrace:
    space: ModelSpace
    base: Point
    t_grid: np.ndarray
    ent: np.ndarray
    u_n: np.ndarray
    theta_sq: np.ndarray
    F: np.ndarray
    c0_estimate: LimitEstimate
    c0_inf: float
    errors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def N(self) -> float:
        return self.space.N

    @property
    def f_over_sqrt_t(self) -> np.ndarray:
        return self.F / np.sqrt(self.t_grid)

    def __len__(self) -> int:
        return len(self.t_grid)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t_grid,
            "ent": self.ent,
            "u_n": self.u_n,
            "theta_sq": self.theta_sq,
            "F": self.F,
            "F_over_sqrt_t": self.f_over_sqrt_t,
        }, columns=TRACE_COLUMNS)


def estimate_c0(t_grid: np.ndarray, ratio: np.ndarray, samples: int | None = None) -> LimitEstimate:
    """lim F(t)/sqrt(t) as t -> 0 from the smallest grid times."""
    k = min(int(samples or lab_setting("evi.limit_samples", 6)), len(t_grid))
    order = np.argsort(t_grid)[:k]
    pairs = [(float(t_grid[i]), float(ratio[i])) for i in order]
    try:
        return limit_extrapolate(pairs)
    except (IllConditioned, DomainError) as exc:
        t0, v0 = pairs[0]
        log.warning("C0 limit fit failed (%s); using F/sqrt(t) at t=%g", exc, t0)
        return LimitEstimate(v0, 0.0, float(np.ptp([v for _t, v in pairs])))


def heat_trace(space: ModelSpace, t_grid: Sequence[float], base=None, *,
               workers: int | None = None, f_nodes: int | None = None) -> EviTrace:
    """
    Functionals of the heat flow from `base` over `t_grid`, with
    F(t) = int_0^t ds / U_N(mu_s) integrated after s = u^2 by Gauss-Legendre panels
    between consecutive grid times.
    The error on F adds each panel's gap to a half-order rule to the
    propagated entropy error.
    """
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    if t_grid.size < 2 or t_grid[0] <= 0 or np.any(np.diff(t_grid) <= 0):
        raise DomainError("time grid must hold at least 2 distinct positive times")
    x = space.base_point if base is None else check_point(space, base)
    if space.is_cone_type and any(x):
        densities.heat_kernel(space, float(t_grid[0]), x)  # raises PoleOnly
    src = _source_space(space, x)
    workers = int(workers or lab_setting("workers", 4))
    k = int(f_nodes or lab_setting("evi.f_nodes", 8))
    gx, gw = np.polynomial.legendre.leggauss(k)
    cx, cw = np.polynomial.legendre.leggauss(max(k // 2, 2))

    roots = np.sqrt(t_grid)
    edges = np.concatenate([[0.0], roots])
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    u_nodes = mids[:, None] + half[:, None] * gx[None, :]
    u_coarse = mids[:, None] + half[:, None] * cx[None, :]

    def grid_point(t: float) -> tuple[QuadResult, QuadResult]:
        m = heat_measure(src, t, x)
        return entropy_result(m), second_moment_result(m, x)

    def node_entropy(s: float) -> QuadResult:
        return entropy_result(heat_measure(src, s, x))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        at_grid = list(pool.map(grid_point, t_grid))
        at_nodes = list(pool.map(node_entropy, np.square(u_nodes).ravel()))
        at_coarse = list(pool.map(node_entropy, np.square(u_coarse).ravel()))

    N = space.N
    ent = np.array([e.value for e, _ in at_grid])
    ent_err = np.array([e.error_estimate for e, _ in at_grid])
    theta = np.array([m.value for _, m in at_grid])
    theta_err = np.array([m.error_estimate for _, m in at_grid])
    node_ent = np.array([e.value for e in at_nodes]).reshape(u_nodes.shape)
    node_err = np.array([e.error_estimate for e in at_nodes]).reshape(u_nodes.shape)

    integrand = 2.0 * u_nodes * np.exp(node_ent / N)
    panels = half * (integrand @ gw)
    coarse_ent = np.array([e.value for e in at_coarse]).reshape(u_coarse.shape)
    coarse = half * ((2.0 * u_coarse * np.exp(coarse_ent / N)) @ cw)
    F = np.cumsum(panels)
    F_err = np.cumsum(half * ((integrand * node_err / N) @ gw) + np.abs(panels - coarse))
    ratio = F / roots

    trace = EviTrace(
        space=space, base=x, t_grid=t_grid, ent=ent,
        u_n=np.exp(-ent / N), theta_sq=theta, F=F,
        c0_estimate=estimate_c0(t_grid, ratio),
        c0_inf=float(np.min(ratio)),
        errors={"ent": ent_err, "theta_sq": theta_err, "F": F_err},
    )
    log.info("trace on %s: %d points, C0 ~ %.10g", space.kind.value, len(t_grid), trace.c0_estimate.value)
    return trace


# ---- Shannon bound -----------------------------------------------------------
@dataclass(frozen=True)
class ShannonEntry:
    u_n: float
    spread: float           # Var, or W_2^2 to the anchor
    spread_kind: str        # "var" | "second_moment"
    anchor: Point | None
    d0: float
    beta: float
    bound: float
    margin: float
    relative_margin: float
    t_star: float           # Var / 2N, where the chained bound is optimised
    barycenter: Point | None
    barycenter_regular: bool | None
    error_estimate: float


def shannon_bound(space: ModelSpace, m: ProbMeasure, *, c0: float | None = None,
                  d0: float | None = None, anchor=None) -> ShannonEntry:
    """
    U_N(m) against beta^{1/N} sqrt(2 D0^2 spread / N).
    With no constant the sharp generic D0 = sqrt(pi e) is paired with Var(m).
    A point-specific constant (c0 or d0) is paired with the second moment about
    `anchor` (the base point when omitted).
    """
    N = space.N
    ent = entropy_result(m)
    un = u_n(ent.value, N)
    point_specific = c0 is not None or d0 is not None
    if c0 is not None and d0 is not None:
        raise DomainError("give c0 or d0, not both")
    D0 = SQRT_PI_E if not point_specific else (d0 if d0 is not None else 1.0 / c0)
    if not D0 > 0:
        raise DomainError(f"D0 must be positive, got {D0}")

    bary = None
    regular = None
    if point_specific:
        z = space.base_point if anchor is None else check_point(space, anchor)
        res = second_moment_result(m, z)
        spread, kind, spread_err = res.value, "second_moment", res.error_estimate
    else:
        z = None
        b = barycenter(m)
        spread, kind, spread_err = b.var, "var", b.error_estimate
        bary = b.point
        regular = is_regular_point(space, b.point)
    if spread < 1e-14:
        raise DegenerateMeasure(f"spread {spread:.3g} is too small for a Shannon bound")

    scale = m.beta ** (1.0 / N)
    bound = scale * math.sqrt(2.0 * D0 * D0 * spread / N)
    err = un * ent.error_estimate / N + 0.5 * bound * spread_err / spread
    return ShannonEntry(
        u_n=un, spread=spread, spread_kind=kind, anchor=z, d0=D0, beta=m.beta,
        bound=bound, margin=bound - un, relative_margin=1.0 - un / bound,
        t_star=spread / (2.0 * N), barycenter=bary, barycenter_regular=regular,
        error_estimate=err,
    )


# ---- EVI ---------------------------------------------------------------------
@dataclass(frozen=True)
class EviResidual:
    t: float
    distance: float
    lhs: float
    rhs: float
    residual: float
    fd_error: float

    @property
    def passed(self) -> bool:
        return self.residual >= -self.fd_error


def evi_check(space: ModelSpace, t_grid: Sequence[float], z_measure: ProbMeasure,
              K: float = 0.0, N: float | None = None, *, workers: int | None = None) -> list[EviResidual]:
    """
    d/dt s_{K/N}(W/2)^2 + K s_{K/N}(W/2)^2 <= (N/2)(1 - U_N(z)/U_N(mu_t)) along the heat
    flow from the base, W = W_2(mu_t, z). The time derivative is a five-point
    difference in log t; its gap to the three-point difference is the error budget.
    """
    if space.symmetry is Symmetry.AXIAL:
        raise DomainError("the EVI check needs quantile couplings (1-D or radial spaces)")
    t = np.asarray(sorted(float(v) for v in t_grid))
    if t.size < 5:
        raise DomainError("the EVI check needs at least 5 grid times")
    logt = np.log(t)
    h = np.diff(logt)
    if np.ptp(h) > 1e-9 * abs(h[0]):
        raise DomainError("the EVI check needs a geometric time grid")
    h = float(h[0])
    N = float(N if N is not None else space.N)
    kn = K / N
    uz = u_n(entropy_result(z_measure).value, N)
    workers = int(workers or lab_setting("workers", 4))

    def point(tt: float) -> tuple[float, float]:
        m = heat_measure(space, tt)
        w2sq, _err = w2_squared(m, z_measure)
        return math.sqrt(w2sq), u_n(entropy_result(m).value, N)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = list(pool.map(point, t))
    dist = np.array([v[0] for v in values])
    un_t = np.array([v[1] for v in values])
    sk = np.array([s_kappa(kn, 0.5 * d) ** 2 for d in dist])
    rhs_all = 0.5 * N * (1.0 - uz / un_t)

    out: list[EviResidual] = []
    scale = float(np.max(np.abs(rhs_all)))
    for i in range(2, len(t) - 2):
        d5 = (-sk[i + 2] + 8.0 * sk[i + 1] - 8.0 * sk[i - 1] + sk[i - 2]) / (12.0 * h * t[i])
        d3 = (sk[i + 1] - sk[i - 1]) / (2.0 * h * t[i])
        fd_err = abs(d5 - d3)
        if fd_err > 0.1 * scale:
            raise GridTooCoarse(f"difference error {fd_err:.3g} at t={t[i]:g} exceeds 10% of {scale:.3g}")
        lhs = d5 + K * sk[i]
        out.append(EviResidual(float(t[i]), float(dist[i]), float(lhs), float(rhs_all[i]),
                               float(rhs_all[i] - lhs), float(fd_err)))
    return out


@dataclass(frozen=True)
class IntegratedEviRow:
    t: float
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def integrated_evi_check(trace: EviTrace, nu: ProbMeasure) -> list[IntegratedEviRow]:
    """(1/4)W_2^2(mu_t, nu) - (1/4)W_2^2(delta_x, nu) <= Nt/2 - (N U_N(nu)/2) F(t) along a trace."""
    N = trace.N
    un = u_n(entropy_result(nu).value, N)
    theta_nu = second_moment_result(nu, trace.base).value
    rows = []
    for t, F in zip(trace.t_grid, trace.F):
        w2sq, _err = w2_squared(heat_measure(trace.space, float(t), trace.base), nu)
        rows.append(IntegratedEviRow(float(t), 0.25 * (w2sq - theta_nu), 0.5 * N * t - 0.5 * N * un * F))
    return rows


def shannon_chain_bound(trace: EviTrace, nu: ProbMeasure) -> tuple[float, float, float]:
    """(U_N(nu), min_t (t + W^2/2N)/F(t), argmin t) with W^2 the second moment about the trace base."""
    N = trace.N
    w2sq = second_moment_result(nu, trace.base).value
    values = (trace.t_grid + w2sq / (2.0 * N)) / trace.F
    i = int(np.argmin(values))
    return u_n(entropy_result(nu).value, N), float(values[i]), float(trace.t_grid[i])


# ---- Constants ---------------------------------------------------------------
def cone_c0_from_kernel_constant(N: float, v1: float) -> float:
    """2 c^{1/N} e^{-1/2} for the pole kernel prefactor c."""
    return 2.0 * cone_kernel_constant(N, v1) ** (1.0 / N) * math.exp(-0.5)


def cone_c0_closed_form(N: float, v1: float) -> float:
    return (v1 / omega(N)) ** (-1.0 / N) / SQRT_PI_E


def half_line_c0_predictions(N: float) -> dict[str, float]:
    """
    C0 at the end of the weighted half-line ([0, inf), r^{N-1} dr) under the kernel
    the lab implements (the cone formula with v1 = 1/N) and under the alternative
    form c_N t^{-1/2} exp(-r^2/2t), whose normalising constant at t = 1 is
    c_N = 1 / (2^{N/2 - 1} Gamma(N/2)).
    """
    c_n = 1.0 / (2.0 ** (0.5 * N - 1.0) * special.gamma(0.5 * N))
    return {
        "implemented": cone_c0_closed_form(N, 1.0 / N),
        "implemented_from_kernel_constant": cone_c0_from_kernel_constant(N, 1.0 / N),
        "alternative": 2.0 * c_n ** (-1.0 / N) * math.exp(-0.5),
    }


def entropy_limit(space: ModelSpace, x=None, t_values: Sequence[float] | None = None) -> tuple[LimitEstimate, float]:
    """Extrapolated t -> 0 limit of the rescaled heat-kernel entropy, with the expected -(N/2) log(4 pi e)."""
    x = space.base_point if x is None else check_point(space, x)
    if t_values is None:
        t_values = np.geomspace(1e-3, 1e-1, 7)
    samples = [(float(t), rescaled_entropy(space, x, float(t))) for t in t_values]
    target = -0.5 * space.N * math.log(4.0 * math.pi * math.e)
    try:
        est = limit_extrapolate(samples)
    except IllConditioned as exc:
        t0, v0 = min(samples)
        log.warning("entropy limit fit failed (%s); using t=%g", exc, t0)
        est = LimitEstimate(v0, 0.0, float(np.ptp([v for _t, v in samples])))
    return est, target

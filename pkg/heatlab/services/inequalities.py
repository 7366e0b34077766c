# heatlab/services/inequalities.py
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from heatlab.services.conf import lab_setting
from heatlab.services.errors import AVRZero, KNotPositive
from heatlab.services.functionals import (
    ProbMeasure,
    barycenter,
    entropy_result,
    fisher_result,
    second_moment_result,
)
from heatlab.services.model_spaces import (
    ModelSpace,
    SpaceKind,
    avr,
    d0_at,
    is_regular_point,
    reference_mass,
)

TWO_PI_E = 2.0 * math.pi * math.e


@dataclass(frozen=True)
class InequalityCheck:
    """One inequality evaluated on one measure; margin >= 0 means it holds."""
    name: str
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    error_estimate: float = 0.0
    hypotheses_met: bool = True
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tolerance


def _tol(tol: float | None) -> float:
    return float(tol if tol is not None else lab_setting("inequalities.tol", 1e-6))


def _weighted_avr(space: ModelSpace, m: ProbMeasure) -> float:
    a = avr(space)
    if a <= 0:
        raise AVRZero(f"{space.kind.value} has AVR = 0")
    return m.beta * a


def log_sobolev_check(space: ModelSpace, m: ProbMeasure, tol: float | None = None) -> InequalityCheck:
    """Ent <= (N/2) log(I / (2 pi e N AVR^{2/N})), all taken against beta * m."""
    N = space.N
    a = _weighted_avr(space, m)
    ent = entropy_result(m)
    fi = fisher_result(m)
    rhs = 0.5 * N * math.log(fi.value / (TWO_PI_E * N * a ** (2.0 / N)))
    err = ent.error_estimate + 0.5 * N * fi.error_estimate / fi.value
    return InequalityCheck("log_sobolev", ent.value, rhs, rhs - ent.value, _tol(tol), err,
                           details={"avr": a, "fisher": fi.value})


def uncertainty_check(space: ModelSpace, m: ProbMeasure, tol: float | None = None) -> InequalityCheck:
    """
    I^{1/2} Var^{1/2} >= N AVR^{1/N}, with the weighted right-hand side
    N AVR_{beta m}^{1/N} beta^{-1/N}.
    The anchored form I^{1/2} W_2(m, delta_x) >= N AVR^{1/N} sqrt(pi e) / D0(x) at the
    base x goes into `details`; it is an equality for pole kernels on cones.
    """
    N = space.N
    a = _weighted_avr(space, m)
    fi = fisher_result(m)
    b = barycenter(m)
    product = math.sqrt(fi.value * b.var)
    bound = N * a ** (1.0 / N) * m.beta ** (-1.0 / N)
    err = 0.5 * product * (fi.error_estimate / fi.value + b.error_estimate / max(b.var, 1e-300))

    x = space.base_point
    w2 = second_moment_result(m, x)
    anchored = math.sqrt(fi.value * w2.value)
    anchored_bound = N * avr(space) ** (1.0 / N) * math.sqrt(math.pi * math.e) / d0_at(space, x)
    details = {
        "fisher": fi.value,
        "var": b.var,
        "ratio": product / bound,
        "barycenter": list(b.point),
        "barycenter_regular": is_regular_point(space, b.point),
        "anchored_product": anchored,
        "anchored_bound": anchored_bound,
        "anchored_ratio": anchored / anchored_bound,
        "anchored_margin": anchored - anchored_bound,
    }
    return InequalityCheck("uncertainty", product, bound, product - bound, _tol(tol), err, details=details)


def _require_positive_k(space: ModelSpace) -> None:
    if space.kind is not SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K or space.K <= 0:
        raise KNotPositive(f"{space.kind.value} carries K = {space.K}")


def n_log_sobolev_check(space: ModelSpace, m: ProbMeasure, tol: float | None = None) -> InequalityCheck:
    """
    KN [exp(2 Ent / N) - 1] <= I, with Ent taken against the probability-normalised
    reference; the raw sin^{N-1} normalisation is reported alongside.
    """
    _require_positive_k(space)
    N, K = space.N, space.K
    ent = entropy_result(m)
    fi = fisher_result(m)
    log_mass = math.log(reference_mass(space))
    ent_unit = ent.value + log_mass

    def lhs(e: float) -> float:
        return K * N * math.expm1(2.0 * e / N)

    unit, raw = lhs(ent_unit), lhs(ent.value)
    margin_raw = fi.value - raw
    err = fi.error_estimate + 2.0 * K * math.exp(2.0 * ent_unit / N) * ent.error_estimate
    details = {
        "ent_unit": ent_unit,
        "ent_raw": ent.value,
        "fisher": fi.value,
        "margin_raw": margin_raw,
        "sign_disagreement": (fi.value - unit >= 0) != (margin_raw >= 0),
    }
    return InequalityCheck("n_log_sobolev", unit, fi.value, fi.value - unit, _tol(tol), err, details=details)


def positive_curv_uncertainty_check(space: ModelSpace, m: ProbMeasure, tol: float | None = None) -> InequalityCheck:
    """
    Var (1 + I / KN) >= N / (2 pi e).
    The interval model is collapsed, so the non-collapsing hypothesis is recorded as
    unmet and a negative margin is not a counterexample.
    """
    _require_positive_k(space)
    N, K = space.N, space.K
    fi = fisher_result(m)
    b = barycenter(m)
    lhs = b.var * (1.0 + fi.value / (K * N))
    rhs = N / TWO_PI_E
    err = b.error_estimate * (1.0 + fi.value / (K * N)) + b.var * fi.error_estimate / (K * N)
    return InequalityCheck("positive_curv_uncertainty", lhs, rhs, lhs - rhs, _tol(tol), err,
                           hypotheses_met=False, details={"var": b.var, "fisher": fi.value})


@dataclass(frozen=True)
class ChainReport:
    lower: float        # -(N/2) log(2 pi e Var / N) - log beta
    ent: float
    upper: float        # (N/2) log(I / (2 pi e N AVR^{2/N}))
    product_margin: float
    tolerance: float

    @property
    def shannon_margin(self) -> float:
        return self.ent - self.lower

    @property
    def log_sobolev_margin(self) -> float:
        return self.upper - self.ent

    @property
    def consistent(self) -> bool:
        if self.shannon_margin < -self.tolerance or self.log_sobolev_margin < -self.tolerance:
            return True
        return self.product_margin >= -2.0 * self.tolerance


def shannon_log_sobolev_chain(space: ModelSpace, m: ProbMeasure, tol: float | None = None) -> ChainReport:
    """The two-line chain Shannon <= Ent <= log-Sobolev, which yields the uncertainty product."""
    N = space.N
    a = _weighted_avr(space, m)
    ent = entropy_result(m).value
    fi = fisher_result(m).value
    var = barycenter(m).var
    lower = -0.5 * N * math.log(TWO_PI_E * var / N) - math.log(m.beta)
    upper = 0.5 * N * math.log(fi / (TWO_PI_E * N * a ** (2.0 / N)))
    product = math.sqrt(fi * var) - N * a ** (1.0 / N) * m.beta ** (-1.0 / N)
    return ChainReport(lower, ent, upper, product, _tol(tol))

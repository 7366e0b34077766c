# heatlab/services/rigidity.py
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import integrate

from heatlab.services.conf import lab_setting
from heatlab.services.errors import ConfigError, DomainError, WindowEmpty
from heatlab.services.evi import EviTrace, estimate_c0
from heatlab.services.model_spaces import SQRT_PI_E, ModelSpace, check_point, is_regular_up_to_scale

log = logging.getLogger(__name__)

MIN_WINDOW = 8
# relative slack for "nondecreasing" and "concave" on numerically computed traces
MONOTONE_SLACK = 1e-9


class Classification(str, Enum):
    EUCLIDEAN = "euclidean"
    CONE = "cone"
    NONE = "none"


@dataclass(frozen=True)
class RigidityVerdict:
    classification: Classification
    d0_fit: float
    deviation: float        # sup |U - sqrt(2 D0^2 theta^2 / N)| / U over the window
    abs_deviation: float
    window: tuple[float, float]
    d0_unscaled: float = float("nan")   # d0_fit with the (r d, C m) rescaling undone

    def as_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "d0_fit": self.d0_fit,
            "d0_unscaled": self.d0_unscaled,
            "deviation": self.deviation,
            "abs_deviation": self.abs_deviation,
            "window": list(self.window),
        }


def rigidity_scan(trace: EviTrace, tol: float | None = None,
                  window: tuple[float, float] | None = None) -> RigidityVerdict:
    """
    Check U_N = sqrt(2 D0^2 theta^2 / N) along the trace with D0 = 1 / C0.
    Rescaling the space multiplies D0 by (C r^-N)^{1/N}; the Euclidean test compares
    the unscaled D0 with sqrt(pi e), so the verdict does not depend on (r, C).
    """
    tol = float(tol if tol is not None else lab_setting("rigidity.tol", 1e-5))
    t = trace.t_grid
    lo, hi = window if window is not None else (float(t[0]), float(t[-1]))
    mask = (t >= lo) & (t <= hi)
    if int(mask.sum()) < MIN_WINDOW:
        raise WindowEmpty(f"{int(mask.sum())} trace points in [{lo:g}, {hi:g}], need {MIN_WINDOW}")

    c0 = trace.c0_estimate.value
    if not c0 > 0:
        raise DomainError(f"C0 estimate {c0} is not positive")
    d0 = 1.0 / c0
    d0_unscaled = d0 / trace.space.density_scale ** (1.0 / trace.N)
    u = trace.u_n[mask]
    predicted = np.sqrt(2.0 * d0 * d0 * trace.theta_sq[mask] / trace.N)
    gap = np.abs(u - predicted)
    abs_dev = float(np.max(gap))
    dev = float(np.max(gap / u))

    if dev >= tol:
        cls = Classification.NONE
    elif abs(d0_unscaled / SQRT_PI_E - 1.0) < tol and is_regular_up_to_scale(trace.space, trace.base):
        cls = Classification.EUCLIDEAN
    else:
        cls = Classification.CONE
    log.info("rigidity: %s (D0=%.10g, unscaled %.10g, deviation=%.3g)", cls.value, d0, d0_unscaled, dev)
    return RigidityVerdict(cls, d0, dev, abs_dev, (float(t[mask][0]), float(t[mask][-1])), d0_unscaled)


@dataclass(frozen=True)
class MonotonicityReport:
    f_ratio_violations: list[int]
    u_n_violations: list[int]
    concavity_violations: list[int]

    @property
    def passed(self) -> bool:
        return not (self.f_ratio_violations or self.u_n_violations or self.concavity_violations)

    @property
    def violations(self) -> int:
        return len(self.f_ratio_violations) + len(self.u_n_violations) + len(self.concavity_violations)


def _drops(values: np.ndarray) -> list[int]:
    prev = values[:-1]
    bad = values[1:] < prev - MONOTONE_SLACK * np.abs(prev)
    return [int(i) + 1 for i in np.flatnonzero(bad)]


def monotonicity_check(trace: EviTrace) -> MonotonicityReport:
    """F/sqrt(t) and U_N nondecreasing, U_N concave in t; indices of offending points."""
    t = trace.t_grid
    u = trace.u_n
    slopes = np.diff(u) / np.diff(t)
    rising = slopes[1:] > slopes[:-1] + MONOTONE_SLACK * np.abs(slopes[:-1])
    return MonotonicityReport(
        f_ratio_violations=_drops(trace.f_over_sqrt_t),
        u_n_violations=_drops(u),
        concavity_violations=[int(i) + 1 for i in np.flatnonzero(rising)],
    )


# ---- External traces ---------------------------------------------------------
def trace_from_csv(source: str | Path | pd.DataFrame, space: ModelSpace, base=None) -> EviTrace:
    """
    Trace from a table with columns t, ent, theta_sq.
    F is rebuilt from the entropies by the trapezoid rule in sqrt(t); the first
    panel assumes U_N grows like sqrt(t) below the smallest time.
    """
    frame = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    missing = {"t", "ent", "theta_sq"} - set(frame.columns)
    if missing:
        raise ConfigError(f"trace table lacks columns {sorted(missing)}", key="trace")
    frame = frame.sort_values("t", kind="mergesort").reset_index(drop=True)
    t = frame["t"].to_numpy(dtype=float)
    if t.size < 2 or t[0] <= 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("trace times must be positive and distinct", key="trace.t")
    N = space.N
    ent = frame["ent"].to_numpy(dtype=float)
    u = np.exp(-ent / N)
    roots = np.sqrt(t)
    g = 2.0 * roots / u
    F = 2.0 * t[0] / u[0] + integrate.cumulative_trapezoid(g, roots, initial=0.0)
    x = space.base_point if base is None else check_point(space, base)
    return EviTrace(
        space=space, base=x, t_grid=t, ent=ent, u_n=u,
        theta_sq=frame["theta_sq"].to_numpy(dtype=float), F=F,
        c0_estimate=estimate_c0(t, F / roots), c0_inf=float(np.min(F / roots)),
    )


def corrupt_trace(trace: EviTrace, index: int, factor: float, field: str = "u_n") -> EviTrace:
    """Copy of `trace` with one entry of `field` ("u_n" or "F") multiplied by `factor`."""
    if field not in ("u_n", "F"):
        raise DomainError(f"cannot corrupt {field!r}")
    values = getattr(trace, field).copy()
    values[index] *= factor
    if field == "u_n":
        return replace(trace, u_n=values, ent=-trace.N * np.log(values))
    return replace(trace, F=values)


def perturb_trace(trace: EviTrace, noise: float, rng: np.random.Generator) -> EviTrace:
    """Multiplicative noise (1 + noise * Z) on U_N, Z standard normal."""
    z = rng.standard_normal(len(trace))
    values = trace.u_n * (1.0 + noise * z)
    if np.any(values <= 0):
        raise DomainError(f"noise level {noise} drives U_N non-positive")
    return replace(trace, u_n=values, ent=-trace.N * np.log(values))

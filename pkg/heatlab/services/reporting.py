# heatlab/services/reporting.py
from __future__ import annotations

import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np
import pandas as pd

from heatlab.services import evi, inequalities, rigidity
from heatlab.services.conf import _merge, lab_setting, run_settings
from heatlab.services.config import CHECK_NAMES, CheckSpec, RunConfig, output_dir
from heatlab.services.errors import ConfigError, DomainError, HeatlabError
from heatlab.services.functionals import ProbMeasure, make_measure, total_mass
from heatlab.services.model_spaces import (
    ModelSpace,
    SpaceKind,
    d0_at,
    describe,
    expected_c0,
    make_space,
)

log = logging.getLogger(__name__)

CSV_FLOAT = "%.16e"
MARGIN_COLUMNS = ["name", "param", "measure", "lhs", "rhs", "margin", "tolerance", "pass",
                  "error_estimate", "provenance", "error"]
SWEEP_AXES = ("t", "beta", "rho", "N")
# Numerical faults outside the lab hierarchy; they fail one row, not the run.
NUMERIC_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError)


# ---- Report types ------------------------------------------------------------
@dataclass
class CheckRow:
    name: str
    param: float | None = None
    measure: str = ""
    lhs: float | None = None
    rhs: float | None = None
    margin: float | None = None
    tolerance: float = 0.0
    passed: bool = False
    error_estimate: float | None = None
    provenance: str = "quadrature"
    error: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def sort_key(self) -> tuple:
        return (self.name, -math.inf if self.param is None else self.param, self.measure)

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "param": _clean(self.param),
            "measure": self.measure,
            "lhs": _clean(self.lhs),
            "rhs": _clean(self.rhs),
            "margin": _clean(self.margin),
            "tolerance": self.tolerance,
            "pass": self.passed,
            "error_estimate": _clean(self.error_estimate),
            "provenance": self.provenance,
            "error": self.error,
            "details": _clean(self.details),
        }


@dataclass
class VerdictReport:
    run_id: str
    space: dict[str, Any]
    rows: list[CheckRow]
    wall_time: float = 0.0
    trace: evi.EviTrace | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def as_dict(self, include_timing: bool = False) -> dict[str, Any]:
        out = {
            "run_id": self.run_id,
            "space": _clean(self.space),
            "checks": [r.as_dict() for r in self.rows],
            "passed": self.passed,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None, tuples to lists."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def _fails(name: str, exc: Exception, *, measure: str = "", param: float | None = None) -> CheckRow:
    return CheckRow(name, param, measure, error=f"{type(exc).__name__}: {exc}", provenance="error")


# ---- Run context -------------------------------------------------------------
class RunContext:
    """Space, measures and the heat trace of one run, built lazily and shared by the checks."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        try:
            self.space: ModelSpace = make_space(cfg.space)
        except DomainError as exc:
            raise ConfigError(str(exc), key="space") from exc
        self._measures: dict[str, ProbMeasure] = {}
        self._trace: evi.EviTrace | None = None
        self._lock = threading.Lock()
        self._trace_lock = threading.Lock()

    @property
    def t_grid(self) -> np.ndarray:
        return grid_times(self.cfg.grid)

    def measure(self, name: str) -> ProbMeasure:
        with self._lock:
            if name not in self._measures:
                spec = dict(self.cfg.measure(name))
                beta = float(spec.pop("beta", 1.0))
                spec.pop("name")
                self._measures[name] = make_measure(self.space, spec, beta=beta, name=name)
            return self._measures[name]

    def measure_names(self, check: CheckSpec) -> list[str]:
        return list(check.params.get("measures") or [m["name"] for m in self.cfg.measures])

    @property
    def trace(self) -> evi.EviTrace:
        with self._trace_lock:
            if self._trace is None:
                if self.cfg.trace is not None:
                    base = self.cfg.trace.get("base")
                    self._trace = rigidity.trace_from_csv(self.cfg.trace["csv"], self.space, base)
                else:
                    self._trace = evi.heat_trace(self.space, self.t_grid)
            return self._trace

    @property
    def has_trace(self) -> bool:
        return self._trace is not None

    @property
    def trace_provenance(self) -> str:
        return "external_trace" if self.cfg.trace is not None else "quadrature"


def grid_times(grid: dict[str, Any]) -> np.ndarray:
    if grid.get("values"):
        return np.asarray(sorted(float(v) for v in grid["values"]))
    return evi.geometric_grid(grid.get("t_min"), grid.get("t_max"), grid.get("points_per_decade"))


def _per_measure(ctx: RunContext, check: CheckSpec, fn: Callable[[ProbMeasure], CheckRow]) -> list[CheckRow]:
    rows = []
    for name in ctx.measure_names(check):
        try:
            row = fn(ctx.measure(name))
            row.measure = name
        except HeatlabError as exc:
            row = _fails(check.name, exc, measure=name)
        except NUMERIC_ERRORS as exc:
            log.exception("check %s on %s raised", check.name, name)
            row = _fails(check.name, exc, measure=name)
        rows.append(row)
    return rows


def _from_inequality(res: inequalities.InequalityCheck) -> CheckRow:
    return CheckRow(res.name, None, "", res.lhs, res.rhs, res.margin, res.tolerance, res.passed,
                    res.error_estimate, "quadrature",
                    details={**res.details, "hypotheses_met": res.hypotheses_met})


# ---- Checks ------------------------------------------------------------------
def check_shannon(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    """U_N against the Shannon bound; the margin is the relative 1 - U_N / bound."""
    tol = float(check.params.get("tol", lab_setting("inequalities.tol", 1e-6)))
    constant = str(check.params.get("constant", "generic"))
    space = ctx.space
    anchor = check.params.get("anchor")

    def one(m: ProbMeasure) -> CheckRow:
        kw: dict[str, Any] = {}
        if constant == "c0":
            kw["c0"] = float(check.params["c0"]) if "c0" in check.params else expected_c0(space, anchor)
        elif constant == "d0":
            kw["d0"] = float(check.params["d0"]) if "d0" in check.params else d0_at(
                space, space.base_point if anchor is None else anchor)
        elif constant != "generic":
            raise DomainError(f"constant must be generic, c0 or d0, got {constant!r}")
        e = evi.shannon_bound(space, m, anchor=anchor, **kw)
        return CheckRow(
            "shannon", None, m.name, e.u_n, e.bound, e.relative_margin, tol,
            e.relative_margin >= -tol, e.error_estimate / e.bound,
            details={
                "margin_abs": e.margin, "spread": e.spread, "spread_kind": e.spread_kind,
                "d0": e.d0, "beta": e.beta, "t_star": e.t_star,
                "barycenter": e.barycenter, "barycenter_regular": e.barycenter_regular,
            },
        )

    return _per_measure(ctx, check, one)


def check_c0(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    tol = float(check.params.get("tol", lab_setting("rigidity.tol", 1e-5)))
    trace = ctx.trace
    space = ctx.space
    est = trace.c0_estimate
    expected = expected_c0(space, trace.base)
    rel = abs(est.value / expected - 1.0)
    details: dict[str, Any] = {
        "c0_inf": trace.c0_inf,
        "exponent_used": est.exponent_used,
        "fit_residual": est.residual,
        "relative_error": rel,
    }
    if space.is_cone_type:
        details["from_kernel_constant"] = evi.cone_c0_from_kernel_constant(space.N, space.v1)
    if space.kind is SpaceKind.WEIGHTED_HALF_LINE:
        details["half_line_predictions"] = evi.half_line_c0_predictions(space.N)
    return [CheckRow("c0", None, "", est.value, expected, -rel, tol, rel <= tol, est.residual,
                     "extrapolation", details=details)]


def check_theta_bound(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    """theta_t^2 <= 2Nt; on cone-type spaces equality is recorded as well."""
    tol = float(check.params.get("tol", 1e-8))
    trace = ctx.trace
    N = trace.N
    rows = []
    for i, t in enumerate(trace.t_grid):
        bound = 2.0 * N * t
        ratio = trace.theta_sq[i] / bound
        details = {"ratio": ratio}
        if ctx.space.is_cone_type:
            details["equality"] = abs(ratio - 1.0) <= tol
        err = trace.errors.get("theta_sq")
        rows.append(CheckRow("theta_bound", float(t), "", trace.theta_sq[i], bound, 1.0 - ratio, tol,
                             1.0 - ratio >= -tol, None if err is None else float(err[i]) / bound,
                             ctx.trace_provenance, details=details))
    return rows


def check_monotonicity(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    rep = rigidity.monotonicity_check(ctx.trace)
    return [CheckRow("monotonicity", None, "", float(rep.violations), 0.0, -float(rep.violations), 0.0,
                     rep.passed, 0.0, ctx.trace_provenance,
                     details={"f_ratio": rep.f_ratio_violations, "u_n": rep.u_n_violations,
                              "concavity": rep.concavity_violations})]


def check_rigidity(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    tol = float(check.params.get("tol", lab_setting("rigidity.tol", 1e-5)))
    window = check.params.get("window")
    v = rigidity.rigidity_scan(ctx.trace, tol, tuple(window) if window else None)
    return [CheckRow("rigidity", None, "", v.deviation, tol, tol - v.deviation, 0.0,
                     v.classification is not rigidity.Classification.NONE,
                     ctx.trace.c0_estimate.residual, ctx.trace_provenance, details=v.as_dict())]


def check_evi(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    tol = float(check.params.get("tol", 1e-4))
    grid = check.params.get("grid")
    t = grid_times(grid) if isinstance(grid, dict) else np.geomspace(0.05, 5.0, 64)
    targets = [check.params["target"]] if check.params.get("target") else ctx.measure_names(check)
    rows = []
    for name in targets:
        try:
            residuals = evi.evi_check(ctx.space, t, ctx.measure(name), K=0.0)
        except HeatlabError as exc:
            rows.append(_fails("evi", exc, measure=name))
            continue
        for r in residuals:
            allowed = max(r.fd_error, tol)
            rows.append(CheckRow("evi", r.t, name, r.lhs, r.rhs, r.residual, allowed, r.residual >= -allowed,
                                 r.fd_error, "finite_difference", details={"w2": r.distance}))
    return rows


def _inequality(fn) -> Callable[[RunContext, CheckSpec], list[CheckRow]]:
    def run(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
        tol = check.params.get("tol")
        return _per_measure(ctx, check, lambda m: _from_inequality(fn(ctx.space, m, tol)))
    run.__name__ = f"check_{fn.__name__.removesuffix('_check')}"
    return run


def check_stochastic_completeness(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    tol = float(check.params.get("tol", 1e-8))
    rows = []
    for t in ctx.t_grid:
        try:
            mass = total_mass(evi.heat_measure(ctx.space, float(t)))
        except HeatlabError as exc:
            rows.append(_fails("stochastic_completeness", exc, param=float(t)))
            continue
        gap = abs(mass.value - 1.0)
        rows.append(CheckRow("stochastic_completeness", float(t), "", mass.value, 1.0, -gap, tol, gap <= tol,
                             mass.error_estimate,
                             "spectral" if ctx.space.kind is SpaceKind.WEIGHTED_INTERVAL_POSITIVE_K else "quadrature"))
    return rows


def check_entropy_limit(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    tol = float(check.params.get("tol", 1e-3))
    anchor = check.params.get("anchor")
    est, target = evi.entropy_limit(ctx.space, anchor, check.params.get("t_values"))
    gap = abs(est.value - target)
    return [CheckRow("entropy_limit", None, "", est.value, target, -gap, tol, gap <= tol, est.residual,
                     "extrapolation", details={"exponent_used": est.exponent_used})]


CHECKS: dict[str, Callable[[RunContext, CheckSpec], list[CheckRow]]] = {
    "shannon": check_shannon,
    "c0": check_c0,
    "theta_bound": check_theta_bound,
    "monotonicity": check_monotonicity,
    "rigidity": check_rigidity,
    "evi": check_evi,
    "log_sobolev": _inequality(inequalities.log_sobolev_check),
    "uncertainty": _inequality(inequalities.uncertainty_check),
    "n_log_sobolev": _inequality(inequalities.n_log_sobolev_check),
    "positive_curv_uncertainty": _inequality(inequalities.positive_curv_uncertainty_check),
    "stochastic_completeness": check_stochastic_completeness,
    "entropy_limit": check_entropy_limit,
}
assert set(CHECKS) == set(CHECK_NAMES)


# ---- Drivers -----------------------------------------------------------------
def _run_one(ctx: RunContext, check: CheckSpec) -> list[CheckRow]:
    try:
        return CHECKS[check.name](ctx, check)
    except HeatlabError as exc:
        if isinstance(exc, ConfigError):
            raise
        log.warning("check %s failed: %s", check.name, exc)
        return [_fails(check.name, exc)]
    except NUMERIC_ERRORS as exc:
        log.exception("check %s raised", check.name)
        return [_fails(check.name, exc)]


def lab_overrides(cfg: RunConfig) -> dict[str, Any]:
    return {"quad": dict(cfg.quad or {}), "ot": dict(cfg.ot or {}), "grid": dict(cfg.grid or {})}


def evaluate(cfg: RunConfig, *, workers: int | None = None, need_trace: bool = False) -> VerdictReport:
    """Run every configured check; rows come back sorted by (check, parameter, measure)."""
    started = time.perf_counter()
    with run_settings(lab_overrides(cfg)):
        ctx = RunContext(cfg)
        workers = int(workers or lab_setting("workers", 4))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            batches = list(pool.map(lambda c: _run_one(ctx, c), cfg.checks))
        rows = sorted((r for batch in batches for r in batch), key=lambda r: r.sort_key)
        trace = None
        if need_trace or ctx.has_trace:
            try:
                trace = ctx.trace
            except HeatlabError as exc:
                log.warning("no trace for this run: %s", exc)
        space = describe(ctx.space)
    return VerdictReport(cfg.run_id, space, rows, time.perf_counter() - started, trace)


def margins_frame(rows: Iterable[CheckRow]) -> pd.DataFrame:
    records = []
    for r in rows:
        d = r.as_dict()
        records.append({k: d[k] for k in MARGIN_COLUMNS})
    return pd.DataFrame.from_records(records, columns=MARGIN_COLUMNS)


def write_report(report: VerdictReport, out: Path, *, include_timing: bool = False) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "report.json"
    path.write_text(json.dumps(report.as_dict(include_timing), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    path = out / "margins.csv"
    margins_frame(report.rows).to_csv(path, index=False, float_format=CSV_FLOAT, lineterminator="\n")
    written.append(path)
    written.append(write_trace(report.trace, out))
    return written


def write_trace(trace: evi.EviTrace | None, out: Path) -> Path:
    """trace.csv; header only when the run never needed a trace."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.csv"
    frame = trace.to_frame() if trace is not None else pd.DataFrame(columns=evi.TRACE_COLUMNS)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT, lineterminator="\n")
    return path


def run_config(cfg: RunConfig, out: str | Path | None = None, *, workers: int | None = None) -> tuple[VerdictReport, list[Path]]:
    report = evaluate(cfg, workers=workers)
    target = output_dir(cfg, out)
    files = write_report(report, target, include_timing=bool(cfg.output.get("include_timing")))
    log.info("run %s: %d rows, exit %d", report.run_id, len(report.rows), report.exit_code)
    return report, files


# ---- Sweeps ------------------------------------------------------------------
def with_axis(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    """Copy of `cfg` with one parameter axis set to `value`."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}", key="axis")
    space = dict(cfg.space)
    measures = [dict(m) for m in cfg.measures]
    if axis == "rho":
        space["rho"] = value
    elif axis == "N":
        space["N"] = value
    elif axis == "beta":
        for m in measures:
            m["beta"] = value
    else:
        touched = [m for m in measures if "t" in m]
        if not touched:
            raise ConfigError("sweeping t needs a measure with a t parameter", key="measures")
        for m in touched:
            m["t"] = value
    raw = _merge(cfg.raw, {"space": space, "measures": measures})
    return replace(cfg, space=space, measures=measures, raw=raw)


def sweep(cfg: RunConfig, axis: str, values: Iterable[float], out: str | Path | None = None, *,
          workers: int | None = None) -> tuple[pd.DataFrame, list[VerdictReport], Path]:
    """One set of margin rows per axis value, gathered in sweep.csv."""
    frames = []
    reports = []
    for value in values:
        report = evaluate(with_axis(cfg, axis, float(value)), workers=workers)
        reports.append(report)
        frame = margins_frame(report.rows)
        extras = pd.DataFrame.from_records([
            {f"detail_{k}": v for k, v in sorted(r.details.items()) if isinstance(v, (int, float, bool)) and v is not None}
            for r in report.rows
        ], index=frame.index)
        frame = pd.concat([frame, extras], axis=1)
        frame.insert(0, "value", float(value))
        frame.insert(0, "axis", axis)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["axis", "value", *MARGIN_COLUMNS])
    target = output_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    path = target / "sweep.csv"
    table.to_csv(path, index=False, float_format=CSV_FLOAT, lineterminator="\n")
    return table, reports, path

# heatlab/services/config.py
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from heatlab.services.conf import lab_setting, lab_settings
from heatlab.services.densities import FAMILIES
from heatlab.services.errors import ConfigError

SCHEMA_VERSION = 1

CHECK_NAMES = (
    "shannon",
    "c0",
    "theta_bound",
    "monotonicity",
    "rigidity",
    "evi",
    "log_sobolev",
    "uncertainty",
    "n_log_sobolev",
    "positive_curv_uncertainty",
    "stochastic_completeness",
    "entropy_limit",
)

# ---- Schema ------------------------------------------------------------------
SECTIONS = {"schema", "space", "measures", "grid", "quad", "ot", "checks", "output", "trace"}
SPACE_KEYS = {"kind", "N", "K", "rho", "v1", "base", "length_scale", "mass_scale"}
MEASURE_KEYS = {"name", "family", "beta", "t", "source", "center", "width", "radius", "components", "weights"}
GRID_KEYS = {"t_min", "t_max", "points_per_decade", "values"}
QUAD_KEYS = {"abs_tol", "rel_tol", "max_evals"}
OT_KEYS = {"levels"}
CHECK_KEYS = {"name", "measures", "constant", "c0", "d0", "anchor", "target", "tol", "window", "grid", "t_values"}
OUTPUT_KEYS = {"dir", "include_timing"}
TRACE_KEYS = {"csv", "base"}

NUMERIC_KEYS = {"N", "K", "rho", "v1", "length_scale", "mass_scale", "beta", "t", "center", "width", "radius",
                "t_min", "t_max", "points_per_decade", "abs_tol", "rel_tol", "max_evals", "levels",
                "c0", "d0", "tol"}


@dataclass(frozen=True)
class CheckSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunConfig:
    space: dict[str, Any]
    measures: list[dict[str, Any]]
    grid: dict[str, Any]
    quad: dict[str, Any]
    ot: dict[str, Any]
    checks: list[CheckSpec]
    output: dict[str, Any]
    trace: dict[str, Any] | None = None
    source: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    @property
    def run_id(self) -> str:
        return self.digest[:12]

    def measure(self, name: str) -> dict[str, Any]:
        for m in self.measures:
            if m["name"] == name:
                return m
        raise ConfigError(f"unknown measure {name!r}", key="measures")


# ---- Parsing -----------------------------------------------------------------
def _line_map(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based source line, from the YAML node tree."""
    lines: dict[str, int] = {}

    def walk(node, path: str):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                sub = f"{path}.{k.value}" if path else str(k.value)
                lines[sub] = k.start_mark.line + 1
                walk(v, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                sub = f"{path}[{i}]"
                lines[sub] = item.start_mark.line + 1
                walk(item, sub)

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return lines


class _Checker:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def fail(self, message: str, key: str):
        raise ConfigError(message, key=key, line=self.lines.get(key))

    def mapping(self, value, key: str, allowed: set[str]) -> dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail("expected a mapping", key)
        for k in value:
            if k not in allowed:
                self.fail(f"unknown key {k!r}", f"{key}.{k}" if key else str(k))
        return {k: self.coerce(v, f"{key}.{k}" if key else str(k), k) for k, v in value.items()}

    def coerce(self, value, key: str, name: str):
        # YAML 1.1 reads 1e-3 as a string
        if name in NUMERIC_KEYS and isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                self.fail(f"expected a number, got {value!r}", key)
        if name in NUMERIC_KEYS and isinstance(value, bool):
            self.fail("expected a number", key)
        return value


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        col = f", column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"YAML syntax error: {exc.problem}{col}", line=line) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from exc

    ck = _Checker(lines)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with a schema header")
    for k in raw:
        if k not in SECTIONS:
            ck.fail(f"unknown section {k!r}", str(k))
    if raw.get("schema") != SCHEMA_VERSION:
        ck.fail(f"schema must be {SCHEMA_VERSION}, got {raw.get('schema')!r}", "schema")

    space = ck.mapping(raw.get("space"), "space", SPACE_KEYS)
    if "kind" not in space:
        ck.fail("space.kind is required", "space")

    measures = []
    seen = set()
    for i, item in enumerate(raw.get("measures") or []):
        key = f"measures[{i}]"
        m = ck.mapping(item, key, MEASURE_KEYS)
        name = str(m.get("name") or f"m{i}")
        if name in seen:
            ck.fail(f"duplicate measure name {name!r}", f"{key}.name")
        if m.get("family") not in FAMILIES:
            ck.fail(f"family must be one of {', '.join(FAMILIES)}", f"{key}.family")
        seen.add(name)
        m["name"] = name
        measures.append(m)

    defaults = lab_settings()
    grid = {**defaults["grid"], **ck.mapping(raw.get("grid"), "grid", GRID_KEYS)}
    quad = {**defaults["quad"], **ck.mapping(raw.get("quad"), "quad", QUAD_KEYS)}
    ot = {**defaults["ot"], **ck.mapping(raw.get("ot"), "ot", OT_KEYS)}
    output = ck.mapping(raw.get("output"), "output", OUTPUT_KEYS)
    output.setdefault("include_timing", False)

    checks = []
    for i, item in enumerate(raw.get("checks") or []):
        key = f"checks[{i}]"
        params = {"name": item} if isinstance(item, str) else ck.mapping(item, key, CHECK_KEYS)
        name = params.pop("name", None)
        if name not in CHECK_NAMES:
            ck.fail(f"unknown check {name!r}", key)
        for ref in params.get("measures", []) or []:
            if ref not in seen:
                ck.fail(f"check refers to unknown measure {ref!r}", f"{key}.measures")
        if params.get("target") is not None and params["target"] not in seen:
            ck.fail(f"unknown target measure {params['target']!r}", f"{key}.target")
        if isinstance(params.get("grid"), dict):
            params["grid"] = ck.mapping(params["grid"], f"{key}.grid", GRID_KEYS)
        checks.append(CheckSpec(name, params))

    trace = None
    if raw.get("trace") is not None:
        trace = ck.mapping(raw["trace"], "trace", TRACE_KEYS)
        if "csv" not in trace:
            ck.fail("trace.csv is required", "trace")
        if source is not None and not Path(trace["csv"]).is_absolute():
            trace["csv"] = str(source.parent / trace["csv"])

    return RunConfig(space, measures, grid, quad, ot, checks, output, trace, source, copy.deepcopy(raw))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, path)


def output_dir(cfg: RunConfig, override: str | Path | None = None) -> Path:
    """--output-dir, then output.dir from the config, then the HEATLAB_OUTPUT_DIR setting."""
    return Path(override or cfg.output.get("dir") or lab_setting("output_dir", "heatlab_output"))

# heatlab/services/conf.py
from __future__ import annotations

import copy
import threading
from contextlib import contextmanager
from typing import Any, Iterator

from django.conf import settings

# Fallbacks for keys a trimmed-down settings module may omit.
DEFAULTS: dict[str, Any] = {
    "quad": {"abs_tol": 1e-10, "rel_tol": 1e-9, "max_evals": 200_000},
    "ot": {"levels": 4096},
    "grid": {"t_min": 1e-3, "t_max": 10.0, "points_per_decade": 8},
    "evi": {"f_nodes": 8, "limit_samples": 6},
    "rigidity": {"tol": 1e-5},
    "inequalities": {"tol": 1e-6},
    "workers": 4,
    "output_dir": "heatlab_output",
    "record_runs": False,
}

# Per-run overlays. Process wide so pool threads of a run see them too.
_overlays: list[dict[str, Any]] = []
_overlay_lock = threading.Lock()


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def lab_settings() -> dict[str, Any]:
    """settings.HEATLAB layered over DEFAULTS, then any active run overlays (a fresh copy each call)."""
    merged = _merge(DEFAULTS, getattr(settings, "HEATLAB", {}))
    with _overlay_lock:
        active = list(_overlays)
    for extra in active:
        merged = _merge(merged, extra)
    return merged


def lab_setting(path: str, default: Any = None) -> Any:
    """Dotted lookup, e.g. lab_setting("quad.abs_tol")."""
    node: Any = lab_settings()
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


@contextmanager
def run_settings(extra: dict[str, Any]) -> Iterator[dict[str, Any]]:
    """
    Layer `extra` over the lab settings until the block exits.
    Runs are expected to be sequential; overlays from concurrent runs would stack.
    """
    extra = copy.deepcopy(extra or {})
    with _overlay_lock:
        _overlays.append(extra)
    try:
        yield lab_settings()
    finally:
        with _overlay_lock:
            for i in range(len(_overlays) - 1, -1, -1):
                if _overlays[i] is extra:
                    del _overlays[i]
                    break

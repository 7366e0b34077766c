# heatlab/tests/test_config.py
from __future__ import annotations

import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from unittest.mock import patch

from django.test import SimpleTestCase, override_settings

from heatlab.services import reporting
from heatlab.services.conf import lab_setting, run_settings
from heatlab.services.config import load_config, output_dir, parse_config
from heatlab.services.errors import ConfigError

VALID = """\
schema: 1
space:
  kind: cone
  N: 2
  rho: 0.5
measures:
  - name: k1
    family: heat_kernel
    t: 1e-1
  - name: b1
    family: bump
    center: 1.0
    width: 0.4
grid:
  t_min: 1e-3
  t_max: 1
  points_per_decade: 4
checks:
  - shannon
  - name: c0
    c0: 0.5
  - name: uncertainty
    measures: [k1, b1]
"""


class ParseTests(SimpleTestCase):
    def test_valid_config(self):
        cfg = parse_config(VALID)
        self.assertEqual(cfg.space["kind"], "cone")
        self.assertEqual([m["name"] for m in cfg.measures], ["k1", "b1"])
        self.assertEqual([c.name for c in cfg.checks], ["shannon", "c0", "uncertainty"])
        self.assertEqual(cfg.checks[2].params["measures"], ["k1", "b1"])
        self.assertFalse(cfg.output["include_timing"])
        self.assertIsNone(cfg.trace)

    def test_exponent_strings_become_floats(self):
        cfg = parse_config(VALID)
        self.assertIsInstance(cfg.measures[0]["t"], float)
        self.assertEqual(cfg.measures[0]["t"], 0.1)
        self.assertEqual(cfg.grid["t_min"], 1e-3)

    def test_unnamed_measures_get_positional_names(self):
        cfg = parse_config("schema: 1\nspace: {kind: euclidean, N: 2}\nmeasures:\n  - family: gaussian\n    t: 1\n")
        self.assertEqual(cfg.measures[0]["name"], "m0")

    def test_run_id(self):
        a = parse_config(VALID)
        self.assertRegex(a.run_id, r"^[0-9a-f]{12}$")
        self.assertEqual(a.run_id, parse_config(VALID).run_id)
        self.assertNotEqual(a.run_id, parse_config(VALID.replace("rho: 0.5", "rho: 0.25")).run_id)


class RejectionTests(SimpleTestCase):
    def assertConfigError(self, text, *, key=None, line=None):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        if key is not None:
            self.assertEqual(ctx.exception.key, key)
        if line is not None:
            self.assertEqual(ctx.exception.line, line)
        return ctx.exception

    def test_unknown_key_reports_its_line(self):
        text = VALID.replace("  rho: 0.5\n", "  rho: 0.5\n  colour: red\n")
        err = self.assertConfigError(text, key="space.colour", line=6)
        self.assertIn("line 6", str(err))

    def test_schema_header(self):
        self.assertConfigError(VALID.replace("schema: 1", "schema: 2"), key="schema")
        self.assertConfigError(VALID.replace("schema: 1\n", ""), key="schema")
        self.assertConfigError("- just\n- a list\n")

    def test_unknown_section(self):
        self.assertConfigError(VALID + "extras: {}\n", key="extras")

    def test_unknown_check(self):
        self.assertConfigError(VALID + "  - curvature\n", key="checks[3]")

    def test_unknown_measure_reference(self):
        self.assertConfigError(VALID.replace("[k1, b1]", "[k1, k9]"), key="checks[2].measures")

    def test_duplicate_measure_name(self):
        self.assertConfigError(VALID.replace("name: b1", "name: k1"), key="measures[1].name")

    def test_bad_family(self):
        self.assertConfigError(VALID.replace("family: bump", "family: lorentzian"), key="measures[1].family")

    def test_non_numeric_value(self):
        self.assertConfigError(VALID.replace("width: 0.4", "width: wide"), key="measures[1].width")

    def test_missing_space_kind(self):
        self.assertConfigError(VALID.replace("  kind: cone\n", ""), key="space")

    def test_yaml_syntax_error_carries_a_line(self):
        err = self.assertConfigError("schema: 1\nspace:\n  kind: [cone\n")
        self.assertIsNotNone(err.line)


class LoadTests(SimpleTestCase):
    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/heatlab.yaml")

    def test_trace_csv_resolved_against_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.yaml"
            path.write_text(VALID + "trace:\n  csv: traces/flow.csv\n", encoding="utf-8")
            cfg = load_config(path)
            self.assertEqual(cfg.source, path)
            self.assertEqual(Path(cfg.trace["csv"]), Path(tmp) / "traces" / "flow.csv")

    def test_trace_needs_csv(self):
        with self.assertRaises(ConfigError):
            parse_config(VALID + "trace:\n  base: [0.0]\n")


class OutputDirTests(SimpleTestCase):
    @override_settings(HEATLAB={"output_dir": "/srv/heatlab"})
    def test_precedence(self):
        plain = parse_config(VALID)
        self.assertEqual(output_dir(plain), Path("/srv/heatlab"))
        with_dir = parse_config(VALID + "output:\n  dir: runs/cone\n")
        self.assertEqual(output_dir(with_dir), Path("runs/cone"))
        self.assertEqual(output_dir(with_dir, "/tmp/cli"), Path("/tmp/cli"))


class RunSettingsTests(SimpleTestCase):
    def test_overlay_is_scoped_to_the_block(self):
        before = lab_setting("quad.abs_tol")
        with run_settings({"quad": {"abs_tol": 1e-7}}) as merged:
            self.assertEqual(merged["quad"]["abs_tol"], 1e-7)
            self.assertEqual(lab_setting("quad.abs_tol"), 1e-7)
            # untouched keys fall through
            self.assertEqual(lab_setting("quad.max_evals"), 200_000)
            with run_settings({"quad": {"abs_tol": 1e-5}, "workers": 1}):
                self.assertEqual(lab_setting("quad.abs_tol"), 1e-5)
                self.assertEqual(lab_setting("workers"), 1)
            self.assertEqual(lab_setting("quad.abs_tol"), 1e-7)
        self.assertEqual(lab_setting("quad.abs_tol"), before)

    def test_overlay_is_dropped_on_error(self):
        with self.assertRaises(RuntimeError):
            with run_settings({"ot": {"levels": 16}}):
                raise RuntimeError("boom")
        self.assertEqual(lab_setting("ot.levels"), 4096)

    def test_pool_threads_see_the_overlay(self):
        with run_settings({"ot": {"levels": 16}}):
            with ThreadPoolExecutor(max_workers=2) as pool:
                seen = list(pool.map(lambda _: lab_setting("ot.levels"), range(4)))
        self.assertEqual(seen, [16] * 4)

    @override_settings(HEATLAB={"ot": {"levels": 512}})
    def test_overlay_sits_above_project_settings(self):
        self.assertEqual(lab_setting("ot.levels"), 512)
        with run_settings({"quad": {"rel_tol": 1e-6}}):
            self.assertEqual(lab_setting("ot.levels"), 512)
            self.assertEqual(lab_setting("quad.rel_tol"), 1e-6)

    def test_evaluate_applies_the_config_tolerances(self):
        cfg = parse_config(VALID.replace("checks:\n", "quad:\n  abs_tol: 1e-8\nchecks:\n"))
        seen = []

        def record(ctx, check):
            seen.append(lab_setting("quad.abs_tol"))
            return []

        checks = {name: record for name in reporting.CHECKS}
        with patch.dict(reporting.CHECKS, checks):
            reporting.evaluate(cfg, workers=2)
        self.assertTrue(seen)
        self.assertEqual(set(seen), {1e-8})
        self.assertEqual(lab_setting("quad.abs_tol"), 1e-10)

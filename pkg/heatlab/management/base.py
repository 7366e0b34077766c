# heatlab/management/base.py
from __future__ import annotations

from django.core.management.base import BaseCommand, CommandError

from heatlab.services.conf import lab_setting
from heatlab.services.config import RunConfig, load_config
from heatlab.services.errors import ConfigError

EXIT_FAIL = 1
EXIT_CONFIG = 2


class LabCommand(BaseCommand):
    """Shared arguments and config loading for the lab verbs."""

    def add_arguments(self, parser):
        parser.add_argument("config", help="Path to a run config (YAML, schema: 1).")
        parser.add_argument("--output-dir", dest="output_dir", default=None,
                            help="Where report files go (overrides output.dir and HEATLAB_OUTPUT_DIR).")
        parser.add_argument("--workers", type=int, default=None, help="Thread pool size.")

    def add_record_argument(self, parser):
        parser.add_argument("--record", action="store_true",
                            help="Store the run in the ledger database (also on when HEATLAB_RECORD_RUNS=true).")

    def load(self, path: str) -> RunConfig:
        try:
            return load_config(path)
        except ConfigError as exc:
            raise CommandError(f"config error: {exc}", returncode=EXIT_CONFIG) from exc

    def should_record(self, opts) -> bool:
        return bool(opts.get("record") or lab_setting("record_runs", False))

    def config_failure(self, exc: ConfigError) -> CommandError:
        return CommandError(f"config error: {exc}", returncode=EXIT_CONFIG)

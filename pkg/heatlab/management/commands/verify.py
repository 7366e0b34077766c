# heatlab/management/commands/verify.py
from __future__ import annotations

from django.core.management.base import CommandError

from heatlab.management.base import EXIT_FAIL, LabCommand
from heatlab.services.errors import ConfigError
from heatlab.services.ledger import record_run
from heatlab.services.reporting import run_config


class Command(LabCommand):
    help = "Run every check in a config; writes report.json, trace.csv and margins.csv."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_record_argument(parser)

    def handle(self, *args, **opts):
        cfg = self.load(opts["config"])
        try:
            report, files = run_config(cfg, opts["output_dir"], workers=opts["workers"])
        except ConfigError as exc:
            raise self.config_failure(exc) from exc

        for path in files:
            self.stdout.write(f"wrote {path}")
        failed = [r for r in report.rows if not r.passed]
        for r in failed:
            label = r.measure or ("" if r.param is None else f"{r.param:g}")
            self.stdout.write(self.style.WARNING(f"FAIL {r.name}[{label}] margin={r.margin} {r.error}".rstrip()))
        if self.should_record(opts):
            run = record_run(report, cfg, "verify")
            self.stdout.write(self.style.NOTICE(f"recorded run #{run.pk}"))
        self.stdout.write(f"{len(report.rows)} rows in {report.wall_time:.2f}s")

        if failed:
            raise CommandError(f"{len(failed)} of {len(report.rows)} checks failed", returncode=EXIT_FAIL)
        self.stdout.write(self.style.SUCCESS(f"run {report.run_id}: all {len(report.rows)} checks passed"))

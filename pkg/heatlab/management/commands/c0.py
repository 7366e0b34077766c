# heatlab/management/commands/c0.py
from __future__ import annotations

from dataclasses import replace

from django.core.management.base import CommandError

from heatlab.management.base import EXIT_FAIL, LabCommand
from heatlab.services.config import CheckSpec, output_dir
from heatlab.services.errors import ConfigError
from heatlab.services.ledger import record_run
from heatlab.services.reporting import evaluate, write_report


class Command(LabCommand):
    help = "Extract the small-time constant C0 = lim F(t)/sqrt(t) and compare it with the closed form."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_record_argument(parser)

    def handle(self, *args, **opts):
        cfg = replace(self.load(opts["config"]), checks=[CheckSpec("c0")])
        try:
            report = evaluate(cfg, workers=opts["workers"], need_trace=True)
        except ConfigError as exc:
            raise self.config_failure(exc) from exc
        write_report(report, output_dir(cfg, opts["output_dir"]))

        row = report.rows[0]
        if row.error:
            raise CommandError(f"C0 extraction failed: {row.error}", returncode=EXIT_FAIL)
        self.stdout.write(f"C0 estimate : {row.lhs:.12g}")
        self.stdout.write(f"C0 expected : {row.rhs:.12g}")
        self.stdout.write(f"inf F/sqrt t: {row.details['c0_inf']:.12g}")
        for label, value in sorted(row.details.get("half_line_predictions", {}).items()):
            self.stdout.write(f"  {label}: {value:.12g}")
        if self.should_record(opts):
            record_run(report, cfg, "c0")

        if not row.passed:
            raise CommandError(f"C0 off by {-row.margin:.3g} (relative)", returncode=EXIT_FAIL)
        self.stdout.write(self.style.SUCCESS("C0 matches the closed form"))

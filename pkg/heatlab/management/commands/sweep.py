# heatlab/management/commands/sweep.py
from __future__ import annotations

from django.core.management.base import CommandError

from heatlab.management.base import EXIT_FAIL, LabCommand
from heatlab.services.errors import ConfigError
from heatlab.services.ledger import record_run
from heatlab.services.reporting import SWEEP_AXES, sweep


def _values(raw: list[str]) -> list[float]:
    # accepts "--values 0.1 1 7" as well as "--values 0.1,1,7"
    out = []
    for chunk in raw:
        out.extend(float(v) for v in chunk.split(",") if v.strip())
    return out


class Command(LabCommand):
    help = "Re-run a config over values of one axis (t, beta, rho, N); writes sweep.csv."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--axis", required=True, choices=SWEEP_AXES)
        parser.add_argument("--values", required=True, nargs="+")
        self.add_record_argument(parser)

    def handle(self, *args, **opts):
        cfg = self.load(opts["config"])
        try:
            values = _values(opts["values"])
        except ValueError as exc:
            raise self.config_failure(ConfigError(f"bad sweep value: {exc}", key="values")) from exc
        if not values:
            raise self.config_failure(ConfigError("no sweep values", key="values"))

        try:
            table, reports, path = sweep(cfg, opts["axis"], values, opts["output_dir"], workers=opts["workers"])
        except ConfigError as exc:
            raise self.config_failure(exc) from exc

        self.stdout.write(f"wrote {path} ({len(table)} rows)")
        if self.should_record(opts):
            for value, report in zip(values, reports):
                record_run(report, cfg, "sweep", axis=opts["axis"], axis_value=value)
            self.stdout.write(self.style.NOTICE(f"recorded {len(reports)} runs"))

        failed = sum(1 for rep in reports for r in rep.rows if not r.passed)
        if failed:
            raise CommandError(f"{failed} sweep rows failed", returncode=EXIT_FAIL)
        self.stdout.write(self.style.SUCCESS(f"{opts['axis']} sweep over {len(values)} values passed"))

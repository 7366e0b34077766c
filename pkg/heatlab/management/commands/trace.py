# heatlab/management/commands/trace.py
from __future__ import annotations

from django.core.management.base import CommandError

from heatlab.management.base import EXIT_FAIL, LabCommand
from heatlab.services import evi, rigidity
from heatlab.services.conf import run_settings
from heatlab.services.config import output_dir
from heatlab.services.errors import ConfigError, DomainError, HeatlabError
from heatlab.services.model_spaces import make_space
from heatlab.services.reporting import grid_times, lab_overrides, write_trace


class Command(LabCommand):
    help = "Compute the heat-flow trace (t, ent, u_n, theta_sq, F, F/sqrt t) and write trace.csv."

    def handle(self, *args, **opts):
        cfg = self.load(opts["config"])
        try:
            space = make_space(cfg.space)
        except DomainError as exc:
            raise self.config_failure(ConfigError(str(exc), key="space")) from exc

        try:
            with run_settings(lab_overrides(cfg)):
                if cfg.trace is not None:
                    trace = rigidity.trace_from_csv(cfg.trace["csv"], space, cfg.trace.get("base"))
                else:
                    trace = evi.heat_trace(space, grid_times(cfg.grid), workers=opts["workers"])
        except ConfigError as exc:
            raise self.config_failure(exc) from exc
        except HeatlabError as exc:
            raise CommandError(f"trace failed: {exc}", returncode=EXIT_FAIL) from exc

        path = write_trace(trace, output_dir(cfg, opts["output_dir"]))
        self.stdout.write(self.style.SUCCESS(
            f"wrote {path} ({len(trace)} points, C0 ~ {trace.c0_estimate.value:.12g})"
        ))

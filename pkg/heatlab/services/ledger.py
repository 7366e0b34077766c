# heatlab/services/ledger.py
from __future__ import annotations

from django.db import transaction

from heatlab.models import CheckOutcome, VerificationRun
from heatlab.services.config import RunConfig
from heatlab.services.reporting import VerdictReport


@transaction.atomic
def record_run(report: VerdictReport, cfg: RunConfig, command: str = "verify", *,
               axis: str = "", axis_value: float | None = None) -> VerificationRun:
    """
    Store one report in the run ledger.
    - one VerificationRun per report, one CheckOutcome per row
    - NaN and infinite numbers go in as NULL
    """
    run = VerificationRun.objects.create(
        run_id=report.run_id,
        command=command,
        config_path=str(cfg.source or ""),
        config_digest=cfg.digest,
        space=report.as_dict()["space"],
        axis=axis,
        axis_value=axis_value,
        passed=report.passed,
        exit_code=report.exit_code,
        wall_time=report.wall_time,
        n_checks=len(report.rows),
    )
    CheckOutcome.objects.bulk_create([
        CheckOutcome(
            run=run,
            name=d["name"], param=d["param"], measure=d["measure"],
            lhs=d["lhs"], rhs=d["rhs"], margin=d["margin"], tolerance=d["tolerance"],
            passed=d["pass"], error_estimate=d["error_estimate"],
            provenance=d["provenance"], error=d["error"],
        )
        for d in (row.as_dict() for row in report.rows)
    ])
    return run

# heatlab/models.py
from __future__ import annotations

from django.db import models


# ==========
# Base types
# ==========

class TimeStampedModel(models.Model):
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)
    updated_at = models.DateTimeField(auto_now=True, db_index=True)

    class Meta:
        abstract = True


# ==========
# Run ledger
# ==========

class VerificationRun(TimeStampedModel):
    """
    One `verify`, `sweep` or `c0` invocation. Report files never reference these rows.
    """
    COMMAND_CHOICES = [
        ("verify", "Verify"),
        ("sweep", "Sweep"),
        ("c0", "C0"),
    ]

    run_id        = models.CharField(max_length=64, db_index=True)
    command       = models.CharField(max_length=16, choices=COMMAND_CHOICES, default="verify")
    config_path   = models.CharField(max_length=500, blank=True, default="")
    config_digest = models.CharField(max_length=64)
    space         = models.JSONField(default=dict, blank=True)
    axis          = models.CharField(max_length=16, blank=True, default="")
    axis_value    = models.FloatField(null=True, blank=True)
    passed        = models.BooleanField(default=False)
    exit_code     = models.PositiveSmallIntegerField(default=0)
    wall_time     = models.FloatField(default=0.0)
    n_checks      = models.PositiveIntegerField(default=0)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        state = "pass" if self.passed else "fail"
        return f"{self.command} {self.run_id} ({state})"


class CheckOutcome(TimeStampedModel):
    run       = models.ForeignKey(VerificationRun, on_delete=models.CASCADE, related_name="outcomes")
    name      = models.CharField(max_length=64, db_index=True)
    param     = models.FloatField(null=True, blank=True)
    measure   = models.CharField(max_length=100, blank=True, default="")
    lhs       = models.FloatField(null=True, blank=True)
    rhs       = models.FloatField(null=True, blank=True)
    margin    = models.FloatField(null=True, blank=True)
    tolerance = models.FloatField(default=0.0)
    passed    = models.BooleanField(default=False)
    error_estimate = models.FloatField(null=True, blank=True)
    provenance = models.CharField(max_length=32, blank=True, default="")
    error     = models.TextField(blank=True, default="")

    class Meta:
        ordering = ["run", "name", "param", "measure"]

    def __str__(self):
        return f"{self.name}[{self.measure or '-'}] {'pass' if self.passed else 'fail'}"

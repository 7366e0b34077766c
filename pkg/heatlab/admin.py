from django.contrib import admin

from .models import CheckOutcome, VerificationRun


class CheckOutcomeInline(admin.TabularInline):
    model = CheckOutcome
    extra = 0
    fields = ("name", "param", "measure", "margin", "tolerance", "passed", "error")
    readonly_fields = fields


@admin.register(VerificationRun)
class VerificationRunAdmin(admin.ModelAdmin):
    list_display = ("run_id", "command", "axis", "axis_value", "passed", "n_checks", "wall_time", "created_at")
    list_filter = ("command", "passed")
    search_fields = ("run_id", "config_path")
    inlines = [CheckOutcomeInline]


@admin.register(CheckOutcome)
class CheckOutcomeAdmin(admin.ModelAdmin):
    list_display = ("run", "name", "param", "measure", "margin", "passed")
    list_filter = ("name", "passed")

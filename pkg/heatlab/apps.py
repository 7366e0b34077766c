from django.apps import AppConfig
class HeatlabConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "heatlab"
    verbose_name = "Heat-flow verification lab"

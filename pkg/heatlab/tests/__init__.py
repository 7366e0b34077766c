# heatlab/tests/__init__.py
import os

from hypothesis import HealthCheck, settings

# Quadrature-backed examples are slow; keep the example count small and the run reproducible.
settings.register_profile(
    "heatlab",
    max_examples=20,
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("heatlab-thorough", parent=settings.get_profile("heatlab"), max_examples=200, derandomize=False)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "heatlab"))

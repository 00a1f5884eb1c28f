from __future__ import annotations

from hypothesis import HealthCheck, settings

# numba compiles on first call, which would trip hypothesis' per-example deadline
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

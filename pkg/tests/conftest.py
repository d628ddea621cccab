import pytest
from hypothesis import HealthCheck, settings

from oecsim.config import ChurnConfig, LatencyConfig, ScenarioConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ZERO_SPREAD = LatencyConfig(intra_zone_spread_ms=0.0, inter_zone_spread_ms=0.0, cloud_spread_ms=0.0)


@pytest.fixture
def exact_cfg():
    """One zone, one device, one compute node, no jitter, no churn, no background traffic."""
    return ScenarioConfig(
        zones=1,
        devices_per_zone=1,
        fogs_per_zone=1,
        oec_participants_per_zone=1,
        arrival_rate_per_s=0.0,
        runs=1,
        latency=ZERO_SPREAD,
        churn=ChurnConfig(enabled=False),
    )

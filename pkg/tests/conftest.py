import numpy as np
import pytest
from hypothesis import settings

from uav_aircomp.scenario import Scenario, SensorSpec, dbm_to_watts

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def single_sensor_scenario(position, num_slots=25, noise_dbm=-80.0, peak=0.01, avg=0.005, **kw):
    """One static sensor; UAV starts at (200, 0) with the default geometry."""
    trace = np.tile(np.asarray(position, dtype=float), (num_slots, 1))
    params = dict(slot_length=0.2, num_slots=num_slots, uav_altitude=100.0, uav_initial=(200.0, 0.0),
                  uav_max_speed=20.0, ref_channel_gain=1e-4, noise_power=dbm_to_watts(noise_dbm),
                  sensors=(SensorSpec(peak, avg, trace),))
    params.update(kw)
    return Scenario(**params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number].line())

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uav_aircomp.scenario import (AdmmParams, ClusterTrace, ConfigError, InfeasibleScenarioError,
                                  Scenario, SensorSpec, build_cluster_scenario, dbm_to_watts,
                                  default_penalties, desk_scenario, load_scenario, reference_scenario,
                                  scenario_from_dict, slots_for)


def _cluster_kw(**kw):
    base = dict(slot_length=0.2, num_slots=10, uav_altitude=100.0, uav_initial=(200.0, 0.0),
                uav_max_speed=20.0, ref_channel_gain=1e-4, noise_power=1e-11, rng_seed=0)
    base.update(kw)
    return base


@pytest.mark.parametrize("level, watts", [(10, 0.01), (-80, 1e-11), (0, 0.001)])
def test_dbm_to_watts(level, watts):
    assert dbm_to_watts(level) == pytest.approx(watts, rel=1e-12)


@pytest.mark.parametrize("k, expected", [
    (64, (1.0, 1.0, 2.5)),
    (50, (1.1314, 1.1314, 2.8284)),
    (1, (8.0, 8.0, 20.0)),
])
def test_default_penalties(k, expected):
    p = default_penalties(k)
    assert (p.rho1, p.rho2, p.rho3) == pytest.approx(expected, abs=1e-4)
    assert p.eps_abs == p.eps_rel == 1e-4


def test_admm_params_must_be_positive():
    with pytest.raises(ConfigError):
        AdmmParams(1.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        AdmmParams(1.0, 1.0, 1.0, max_iters=0)


def test_straight_line_cluster_kinematics():
    c = ClusterTrace((50.0, 100.0), 0.0, 1, 0.01, 0.005, heading=math.pi / 2, speed=5.0)
    sc = build_cluster_scenario([c], **_cluster_kw())
    # trace row n-1 holds slot n
    np.testing.assert_allclose(sc.positions[0, 9], (50.0, 110.0), atol=1e-12)


def test_static_cluster_stays_put():
    c = ClusterTrace((50.0, 100.0), 0.0, 3, 0.01, 0.005, heading=0.3, speed=0.0)
    sc = build_cluster_scenario([c], **_cluster_kw())
    np.testing.assert_array_equal(sc.positions, np.broadcast_to((50.0, 100.0), sc.positions.shape))


def test_reference_defaults():
    sc = reference_scenario(0)
    assert sc.num_sensors == 50 and sc.num_slots == 250
    assert sc.slot_length == 0.2 and sc.uav_altitude == 100.0 and sc.uav_max_speed == 20.0
    np.testing.assert_array_equal(sc.uav_initial, (200.0, 0.0))
    assert sc.noise_power == pytest.approx(1e-11)
    assert sc.ref_channel_gain == pytest.approx(1e-4)
    peaks = sorted(set(np.round(sc.peak_powers, 12)))
    assert peaks == pytest.approx([dbm_to_watts(7), dbm_to_watts(10)])
    assert np.sum(np.isclose(sc.peak_powers, 0.01)) == 15
    np.testing.assert_allclose(sc.avg_powers, sc.peak_powers / 2)


def test_desk_scenario_size():
    sc = desk_scenario(3)
    assert (sc.num_sensors, sc.num_slots) == (10, 100)
    assert sc.admm.rho1 == pytest.approx(8 / math.sqrt(10))


@given(st.integers(1, 400), st.sampled_from([0.1, 0.2, 0.25, 0.5, 1.0]))
def test_time_grid_exact(n, delta):
    sc = Scenario(slot_length=delta, num_slots=n, uav_altitude=100.0, uav_initial=(0.0, 0.0),
                  uav_max_speed=10.0, ref_channel_gain=1e-4, noise_power=1e-11,
                  sensors=(SensorSpec(1.0, 0.5, np.zeros((n, 2))),))
    t = n * delta
    assert abs(sc.mission_duration - t) <= math.ulp(t)
    assert slots_for(t, delta) == n


@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 10.0), st.floats(0.0, 60.0), st.integers(0, 2 ** 32 - 1))
def test_rigid_translation_step_length(heading, speed, radius, seed):
    c = ClusterTrace((100.0, 100.0), radius, 4, 0.01, 0.005, heading=heading, speed=speed)
    sc = build_cluster_scenario([c], **_cluster_kw(rng_seed=seed, num_slots=20))
    steps = np.linalg.norm(np.diff(sc.positions, axis=1), axis=-1)
    np.testing.assert_allclose(steps, 0.2 * speed, atol=1e-9)


@given(st.integers(0, 2 ** 32 - 1))
def test_deterministic_traces(seed):
    a = desk_scenario(seed)
    b = desk_scenario(seed)
    assert a.positions.tobytes() == b.positions.tobytes()


def test_members_stay_in_disc():
    c = ClusterTrace((100.0, 100.0), 30.0, 2000, 0.01, 0.005, heading=0.0, speed=0.0)
    sc = build_cluster_scenario([c], **_cluster_kw(num_slots=1))
    r = np.linalg.norm(sc.positions[:, 0] - (100.0, 100.0), axis=1)
    assert r.max() <= 30.0
    # area-uniform sampling puts a quarter of the members inside half the radius
    assert abs(np.mean(r <= 15.0) - 0.25) < 0.04


def test_random_heading_and_speed_ranges():
    clusters = [ClusterTrace((200.0, 200.0), 0.0, 1, 0.01, 0.005) for _ in range(50)]
    sc = build_cluster_scenario(clusters, **_cluster_kw(num_slots=2, rng_seed=5))
    v = np.diff(sc.positions, axis=1)[:, 0] / 0.2
    speed = np.linalg.norm(v, axis=1)
    heading = np.arctan2(v[:, 1], v[:, 0])
    assert speed.min() >= 1.0 and speed.max() <= 8.0
    assert heading.min() >= -1e-12 and heading.max() <= math.pi + 1e-12


def test_bounds_check_rejects_escaping_trace():
    c = ClusterTrace((390.0, 200.0), 0.0, 1, 0.01, 0.005, heading=0.0, speed=8.0)
    with pytest.raises(InfeasibleScenarioError):
        build_cluster_scenario([c], bounds=((0.0, 400.0), (0.0, 400.0)), **_cluster_kw(num_slots=50))


@pytest.mark.parametrize("peak, avg", [(0.01, 0.01), (0.01, 0.02), (0.01, 0.0)])
def test_sensor_budget_ordering(peak, avg):
    with pytest.raises(ConfigError):
        SensorSpec(peak, avg, np.zeros((3, 2)))


def test_scenario_rejects_bad_values():
    s = SensorSpec(1.0, 0.5, np.zeros((3, 2)))
    base = dict(slot_length=0.2, num_slots=3, uav_altitude=100.0, uav_initial=(0.0, 0.0),
                uav_max_speed=20.0, ref_channel_gain=1e-4, noise_power=1e-11, sensors=(s,))
    for key, bad in [("uav_altitude", 0.0), ("noise_power", -1.0), ("num_slots", 4),
                     ("uav_initial", (np.nan, 0.0)), ("sensors", ())]:
        with pytest.raises(ConfigError):
            Scenario(**{**base, key: bad})


def test_slow_sampling_warning(caplog):
    s = SensorSpec(1.0, 0.5, np.zeros((3, 2)))
    Scenario(slot_length=1.0, num_slots=3, uav_altitude=100.0, uav_initial=(0.0, 0.0),
             uav_max_speed=20.0, ref_channel_gain=1e-4, noise_power=1e-11, sensors=(s,))
    assert "not <<" in caplog.text


YAML = """
slot_length_s: 0.2
mission_duration_s: 4
uav_altitude_m: 100
uav_initial_m: [200, 0]
uav_max_speed: 20
ref_channel_gain_db: -40
noise_power_dbm: -80
clusters:
  - {center0_m: [50, 100], radius_m: 10, member_count: 3, peak_power_dbm: 10, heading_deg: 90, speed: 5}
  - {center0: [300, 150], radius: 0, member_count: 2, peak_power_dbm: 7, avg_power_ratio: 0.25}
"""


def test_load_yaml_with_units(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(YAML)
    sc = load_scenario(path, seed=9)
    assert sc.num_slots == 20 and sc.num_sensors == 5 and sc.rng_seed == 9
    assert sc.noise_power == pytest.approx(1e-11)
    assert sc.ref_channel_gain == pytest.approx(1e-4)
    np.testing.assert_allclose(sc.avg_powers[:3], 0.005)
    np.testing.assert_allclose(sc.avg_powers[3:], dbm_to_watts(7) / 4)
    step = np.diff(sc.positions[0], axis=0)
    np.testing.assert_allclose(step, np.broadcast_to((0.0, 1.0), step.shape), atol=1e-12)
    assert load_scenario(path, seed=9).positions.tobytes() == sc.positions.tobytes()


def test_explicit_sensor_traces():
    cfg = dict(slot_length=0.5, num_slots=2, uav_altitude=50, uav_initial=[0, 0], uav_max_speed=10,
               ref_channel_gain=1e-4, noise_power=1e-10,
               sensors=[{"peak_power": 1.0, "avg_power": 0.4, "trace": [[1, 2], [3, 4]]}])
    sc = scenario_from_dict(cfg)
    np.testing.assert_array_equal(sc.positions[0], [[1, 2], [3, 4]])


@pytest.mark.parametrize("text", [
    "[1, 2]",
    "slot_length: 0.2\n",
    YAML + "unknown_key: 1\n",
    YAML.replace("mission_duration_s: 4", "mission_duration_s: 4.1"),
    YAML.replace("noise_power_dbm: -80", "noise_power_dbm: loud"),
])
def test_bad_config_raises_config_error(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.yaml")

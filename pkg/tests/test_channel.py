import numpy as np
import pytest
from hypothesis import given, strategies as st

from uav_aircomp.channel import aligned_precoder, channel_gains
from uav_aircomp.mse import complex_slot_mse
from uav_aircomp.scenario import Scenario, SensorSpec


def _scenario(w, beta0=1e-4, altitude=100.0):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return Scenario(slot_length=0.2, num_slots=len(w), uav_altitude=altitude, uav_initial=(0.0, 0.0),
                    uav_max_speed=20.0, ref_channel_gain=beta0, noise_power=1e-11,
                    sensors=(SensorSpec(1.0, 0.5, w),))


@pytest.mark.parametrize("w, expected", [((0.0, 0.0), 1e-8), ((30.0, 40.0), 8e-9)])
def test_path_loss_examples(w, expected):
    sc = _scenario([w])
    q = np.zeros((2, 2))
    assert channel_gains(q, sc).gain2[0, 0] == pytest.approx(expected, rel=1e-14)


def test_row_zero_carries_no_transmission():
    sc = _scenario([(0.0, 0.0)])
    q = np.array([[500.0, 500.0], [0.0, 0.0]])
    assert channel_gains(q, sc).gain2[0, 0] == pytest.approx(1e-8)


def test_trajectory_shape_checked():
    with pytest.raises(ValueError):
        channel_gains(np.zeros((3, 2)), _scenario([(0.0, 0.0)]))


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1.0, 500.0), st.floats(1e-6, 1e-2))
def test_overhead_maximises_gain(x, y, altitude, beta0):
    sc = _scenario([(x, y)], beta0=beta0, altitude=altitude)
    over = channel_gains(np.array([[0.0, 0.0], [x, y]]), sc).gain2[0, 0]
    assert over == pytest.approx(beta0 / altitude ** 2, rel=1e-12)
    away = channel_gains(np.array([[0.0, 0.0], [x + 1.0, y]]), sc).gain2[0, 0]
    assert 0 < away < over


@given(st.floats(0.0, 500.0), st.floats(0.1, 100.0))
def test_gain_decreases_with_distance(d, extra):
    sc = _scenario([(0.0, 0.0)])
    near = channel_gains(np.array([[0.0, 0.0], [d, 0.0]]), sc).gain2[0, 0]
    far = channel_gains(np.array([[0.0, 0.0], [d + extra, 0.0]]), sc).gain2[0, 0]
    assert far < near


def test_precoder_examples():
    b = aligned_precoder(4.0, 0.5j)
    assert b == pytest.approx(-2j)
    assert b * 0.5j == pytest.approx(1.0)
    assert aligned_precoder(0.0, 0.3 - 0.1j) == 0


def test_precoder_zero_channel_rejected():
    with pytest.raises(ValueError):
        aligned_precoder(1.0, 0.0)


def test_precoder_random_draws():
    rng = np.random.default_rng(7)
    h = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
    bh = aligned_precoder(np.ones(h.size), h) * h
    assert np.max(np.abs(bh.imag)) <= 1e-12
    np.testing.assert_allclose(bh.real, np.abs(h), rtol=1e-12)
    assert np.all(np.abs(aligned_precoder(np.ones(h.size), h)) ** 2 == pytest.approx(1.0))


@given(st.integers(0, 2 ** 32 - 1))
def test_phase_alignment_never_hurts(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 8))
    h = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    p = rng.uniform(0.0, 2.0, k)
    eta, noise = rng.uniform(0.2, 3.0), rng.uniform(0.0, 1.0)
    bh = aligned_precoder(p, h) * h
    assert np.all(bh.real >= 0) and np.all(np.abs((bh / eta).imag) <= 1e-12)
    aligned = complex_slot_mse(bh, eta, noise)
    rotated = complex_slot_mse(bh * np.exp(2j * np.pi * rng.random(k)), eta, noise)
    magnitude = complex_slot_mse(np.sqrt(p) * np.abs(h), eta, noise)
    assert aligned <= rotated + 1e-12
    assert aligned == pytest.approx(magnitude, rel=1e-12, abs=1e-15)

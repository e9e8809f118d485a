import numpy as np
import pytest
from hypothesis import given, strategies as st

from uav_aircomp.channel import ChannelGains, random_phases
from uav_aircomp.mse import monte_carlo_mse, per_slot_mse, slot_mse, slot_mse_terms, time_averaged_mse


def test_slot_mse_worked_example():
    assert slot_mse([4.0, 9.0], 3.0, 2.0) == pytest.approx(1 / 12, rel=1e-14)


def test_slot_mse_perfect_alignment():
    assert slot_mse([2.25], 1.5, 0.0) == 0.0


@pytest.mark.parametrize("k, eta, noise", [(1, 1.0, 0.0), (3, 2.0, 1.0), (5, 0.5, 4.0)])
def test_slot_mse_all_miss(k, eta, noise):
    assert slot_mse(np.zeros(k), eta, noise) == pytest.approx((k + noise / eta ** 2) / k ** 2)


def test_time_average_of_two_slots():
    # slot MSEs 1/12 and 1/4 with a shared sigma^2 = 2
    theta = np.array([[4.0, 2.0], [9.0, 2.0]])
    eta = np.array([3.0, np.sqrt(2.0)])
    per = per_slot_mse(theta, eta, 2.0)
    assert per == pytest.approx([1 / 12, 1 / 4])
    assert time_averaged_mse(theta, eta, 2.0) == pytest.approx(1 / 6)
    assert time_averaged_mse(theta[:, :1], eta[:1], 2.0) == pytest.approx(slot_mse([4.0, 9.0], 3.0, 2.0))


def test_zero_error_matrix():
    rng = np.random.default_rng(0)
    eta = rng.uniform(0.5, 2.0, 6)
    theta = np.tile(eta ** 2, (4, 1))
    assert time_averaged_mse(theta, eta, 0.0) == pytest.approx(0.0, abs=1e-30)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 10.0))
def test_decomposition_and_scaling(seed, c):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 10))
    theta = rng.uniform(0.0, 5.0, k)
    eta, noise = rng.uniform(0.3, 3.0), rng.uniform(0.0, 2.0)
    mis, nse = slot_mse_terms(theta, eta, noise)
    assert mis >= 0 and nse >= 0
    assert slot_mse(theta, eta, noise) == pytest.approx(mis + nse)
    assert slot_mse_terms(theta, eta, 0.0) == (pytest.approx(mis), 0.0)
    mis_c, nse_c = slot_mse_terms(c ** 2 * theta, c * eta, noise)
    assert mis_c == pytest.approx(mis, rel=1e-10, abs=1e-300)
    assert nse_c == pytest.approx(nse / c ** 2, rel=1e-10, abs=1e-300)


def _channel(gain2, seed=0):
    gain2 = np.asarray(gain2, dtype=float)
    return ChannelGains(gain2, random_phases(gain2.shape, np.random.default_rng(seed)))


def test_monte_carlo_noise_free_cancellation():
    eta = np.array([1.3, 0.7])
    theta = np.tile(eta ** 2, (3, 1))
    mc = monte_carlo_mse(theta, eta, _channel(np.full((3, 2), 0.2)), 0.0, samples=5000)
    assert np.max(mc) <= 1e-28


def test_monte_carlo_worked_example():
    theta = np.array([[4.0], [9.0]])
    mc = monte_carlo_mse(theta, np.array([3.0]), _channel([[0.5], [2.0]]), 2.0, samples=10 ** 6, seed=3)
    assert mc[0] == pytest.approx(1 / 12, rel=0.01)


def test_monte_carlo_noise_plus_symbol_variance():
    mc = monte_carlo_mse(np.zeros((1, 1)), np.ones(1), _channel([[1.0]]), 1.0, samples=10 ** 6, seed=4)
    assert mc[0] == pytest.approx(2.0, rel=0.01)


def test_monte_carlo_within_five_standard_errors():
    rng = np.random.default_rng(11)
    k, n = 4, 6
    gain2 = rng.uniform(0.1, 2.0, (k, n))
    theta = rng.uniform(0.0, 3.0, (k, n))
    eta = rng.uniform(0.5, 2.0, n)
    noise = 0.3
    mc, se = monte_carlo_mse(theta, eta, _channel(gain2, 5), noise, samples=200_000, seed=8, return_stderr=True)
    exact = per_slot_mse(theta, eta, noise)
    assert np.all(np.abs(mc - exact) <= 5 * se)


def test_monte_carlo_deterministic_per_seed():
    theta = np.array([[1.0, 2.0]])
    ch = _channel([[1.0, 1.0]])
    a = monte_carlo_mse(theta, np.ones(2), ch, 0.5, samples=3000, seed=2, block=1000)
    b = monte_carlo_mse(theta, np.ones(2), ch, 0.5, samples=3000, seed=2, block=1000)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        monte_carlo_mse(theta, np.ones(2), ch, 0.5, samples=0)

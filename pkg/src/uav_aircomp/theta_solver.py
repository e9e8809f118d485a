"""Signal-quality-factor (power control) step: per-sensor KKT solution with a bisection on the
average-power multiplier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelGains
from .scenario import Scenario

PEAK, ALIGNED, AVERAGE = "peak", "aligned", "average"


@dataclass(frozen=True)
class ThetaSolution:
    theta: np.ndarray  # (K, N)
    multipliers: np.ndarray  # (K,) average-power multipliers lambda*
    bisection_iters: np.ndarray  # (K,)


def _theta_at(lam, eta, gain2, peak):
    aligned = (eta * gain2 / (gain2 + lam * eta ** 2)) ** 2
    return np.minimum(aligned, peak * gain2)


def optimal_theta_sensor(eta, gain2, peak: float, avg: float, *, max_iter: int = 200,
                         return_info: bool = False):
    """Optimal signal quality factors of one sensor over all slots.

    If the per-slot clipped alignment ``min(eta^2, P g)`` fits the average
    budget, it is optimal (lambda* = 0). Otherwise
    ``theta(lam) = min((eta g / (g + lam eta^2))^2, P g)`` with lam found by
    bisection so the average constraint is tight. The returned point is taken
    at the upper end of the final bracket, so it never exceeds the budget.
    """
    eta = np.asarray(eta, dtype=float)
    gain2 = np.asarray(gain2, dtype=float)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(gain2)) and np.isfinite(peak) and np.isfinite(avg)):
        raise ValueError("non-finite input")
    if np.any(eta <= 0) or np.any(gain2 <= 0):
        raise ValueError("eta and gain2 must be positive")
    n = eta.size
    budget = n * avg

    theta = _theta_at(0.0, eta, gain2, peak)
    if np.sum(theta / gain2) <= budget:
        return (theta, 0.0, 0) if return_info else theta

    def residual(lam):
        return np.sum(_theta_at(lam, eta, gain2, peak) / gain2) - budget

    lo = 0.0
    hi = float(np.median(gain2 / eta ** 2))
    while residual(hi) > 0:
        lo = hi
        hi *= 2.0
    tol = 1e-10 * budget
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = residual(mid)
        if r > 0:
            lo = mid
        else:
            hi = mid
            if -r <= tol:
                break
        if hi - lo <= 1e-15 * hi:
            break
    theta = _theta_at(hi, eta, gain2, peak)
    return (theta, hi, it) if return_info else theta


def optimal_theta(eta: np.ndarray, channel: ChannelGains | np.ndarray, scenario: Scenario,
                  return_info: bool = False):
    """Apply :func:`optimal_theta_sensor` to every sensor; returns a (K, N) matrix."""
    gain2 = channel.gain2 if isinstance(channel, ChannelGains) else np.asarray(channel)
    theta = np.empty_like(gain2)
    lams = np.zeros(scenario.num_sensors)
    iters = np.zeros(scenario.num_sensors, dtype=int)
    for k in range(scenario.num_sensors):
        theta[k], lams[k], iters[k] = optimal_theta_sensor(
            eta, gain2[k], scenario.peak_powers[k], scenario.avg_powers[k], return_info=True)
    if return_info:
        return ThetaSolution(theta, lams, iters)
    return theta


def kkt_labels(theta, eta, gain2, peak: float, lam: float, rtol: float = 1e-9) -> np.ndarray:
    """Label each slot by the KKT case that certifies it, or '' if none applies.

    Ties between the peak value and another case are labelled 'peak'.
    """
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    gain2 = np.asarray(gain2, dtype=float)
    labels = np.full(theta.shape, "", dtype=object)
    peak_val = peak * gain2
    unclipped = eta ** 2 if lam == 0 else (eta * gain2 / (gain2 + lam * eta ** 2)) ** 2

    def close(a, b):
        return np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b))

    interior = close(theta, unclipped) & (unclipped <= peak_val * (1 + rtol))
    labels[interior] = ALIGNED if lam == 0 else AVERAGE
    labels[close(theta, peak_val) & (peak_val <= unclipped * (1 + rtol))] = PEAK
    return labels


def kkt_certificate(theta, eta, gain2, peak: float, avg: float, lam: float,
                    rtol: float = 1e-9, budget_rtol: float = 1e-8) -> bool:
    """Check stationarity/complementary slackness of a per-sensor solution."""
    theta = np.asarray(theta, dtype=float)
    gain2 = np.asarray(gain2, dtype=float)
    n = theta.size
    if np.any(kkt_labels(theta, eta, gain2, peak, lam, rtol) == ""):
        return False
    used = np.sum(theta / gain2)
    if used > n * avg * (1 + budget_rtol):
        return False
    if lam > 0 and abs(used - n * avg) > budget_rtol * n * avg:
        return False
    return bool(np.all(theta <= np.asarray(eta) ** 2 * (1 + rtol)))

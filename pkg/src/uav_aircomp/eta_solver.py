"""Closed-form receive normalizing factors."""

from __future__ import annotations

import numpy as np

# Sentinel multiplier for slots where every signal quality factor is zero:
# the slot MSE then decreases monotonically in eta, so eta is pushed far out.
DEGENERATE_ETA_FACTOR = 1e6


class DegenerateSlotError(ValueError):
    """All signal quality factors in a slot are zero; the optimum is at eta -> infinity."""


def optimal_eta_slot(theta_col, noise_power: float) -> float:
    """Minimiser of sum_k (sqrt(theta_k)/eta - 1)^2 + sigma^2/eta^2 over eta > 0.

    Substituting nu = 1/eta gives a convex quadratic in nu whose stationary
    point yields eta* = (sigma^2 + sum theta) / sum sqrt(theta).
    """
    theta_col = np.asarray(theta_col, dtype=float)
    root_sum = np.sqrt(theta_col).sum()
    if root_sum <= 0:
        raise DegenerateSlotError("all signal quality factors are zero")
    return float((noise_power + theta_col.sum()) / root_sum)


def optimal_eta(theta: np.ndarray, noise_power: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot optimal eta for a (K, N) matrix.

    Returns ``(eta, degenerate)``; degenerate slots get
    ``DEGENERATE_ETA_FACTOR * sigma`` (or the same factor when sigma is 0).
    """
    theta = np.asarray(theta, dtype=float)
    root_sum = np.sqrt(theta).sum(axis=0)
    degenerate = root_sum <= 0
    sentinel = DEGENERATE_ETA_FACTOR * (np.sqrt(noise_power) if noise_power > 0 else 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = (noise_power + theta.sum(axis=0)) / root_sum
    eta = np.where(degenerate, sentinel, eta)
    return eta, degenerate

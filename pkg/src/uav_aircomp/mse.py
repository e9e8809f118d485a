"""Per-slot and time-averaged AirComp MSE, analytic and Monte-Carlo."""

from __future__ import annotations

import numpy as np

from .channel import ChannelGains, aligned_precoder


def slot_mse_terms(theta_col, eta: float, noise_power: float) -> tuple[float, float]:
    """Split one slot's MSE into (misalignment, noise) contributions."""
    theta_col = np.asarray(theta_col, dtype=float)
    k = theta_col.size
    misalign = float(np.sum((np.sqrt(theta_col) / eta - 1.0) ** 2)) / k ** 2
    noise = noise_power / eta ** 2 / k ** 2
    return misalign, noise


def slot_mse(theta_col, eta: float, noise_power: float) -> float:
    """(1/K^2) [sum_k (sqrt(theta_k)/eta - 1)^2 + sigma^2/eta^2]."""
    misalign, noise = slot_mse_terms(theta_col, eta, noise_power)
    return misalign + noise


def per_slot_mse(theta: np.ndarray, eta: np.ndarray, noise_power: float) -> np.ndarray:
    """Vectorised :func:`slot_mse` over the columns of a (K, N) matrix."""
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    k = theta.shape[0]
    misalign = np.sum((np.sqrt(theta) / eta - 1.0) ** 2, axis=0)
    return (misalign + noise_power / eta ** 2) / k ** 2


def time_averaged_mse(theta: np.ndarray, eta: np.ndarray, noise_power: float) -> float:
    return float(np.mean(per_slot_mse(theta, eta, noise_power)))


def complex_slot_mse(bh: np.ndarray, eta, noise_power: float) -> np.ndarray:
    """MSE with complex effective gains b_k h_k: (1/K^2)[sum |b h/eta - 1|^2 + sigma^2/|eta|^2].

    ``bh`` has sensors on axis 0; any trailing axes are carried through.
    """
    bh = np.asarray(bh)
    k = bh.shape[0]
    return (np.sum(np.abs(bh / eta - 1.0) ** 2, axis=0) + noise_power / np.abs(eta) ** 2) / k ** 2


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def monte_carlo_mse(theta: np.ndarray, eta: np.ndarray, channel: ChannelGains, noise_power: float,
                    samples: int, seed: int = 0, block: int = 1 << 16, return_stderr: bool = False):
    """Empirical per-slot MSE of the full transmit/receive chain.

    Unit-variance circularly-symmetric Gaussian symbols are sent through
    aligned precoders with power theta/gain2; the receiver scales by
    1/(K eta) and is compared with the arithmetic mean of the symbols.
    Random streams are spawned per (slot, block), so results depend only on
    ``seed`` and ``block``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    theta = np.asarray(theta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    k, n_slots = theta.shape
    h = channel.coefficients
    power = theta / channel.gain2
    b = aligned_precoder(power, h)
    bh = b * h
    n_blocks = -(-samples // block)
    streams = np.random.SeedSequence(seed).spawn(n_slots * n_blocks)
    mean = np.empty(n_slots)
    stderr = np.empty(n_slots)
    for n in range(n_slots):
        total = 0.0
        total_sq = 0.0
        for j in range(n_blocks):
            rng = np.random.default_rng(streams[n * n_blocks + j])
            m = min(block, samples - j * block)
            s = _cn(rng, (k, m))
            e = _cn(rng, m, noise_power)
            y = bh[:, n] @ s + e
            err = np.abs(y / (k * eta[n]) - s.mean(axis=0)) ** 2
            total += err.sum()
            total_sq += (err ** 2).sum()
        mean[n] = total / samples
        var = max(total_sq / samples - mean[n] ** 2, 0.0)
        stderr[n] = np.sqrt(var / samples)
    return (mean, stderr) if return_stderr else mean

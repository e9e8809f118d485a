"""Free-space line-of-sight channel between the UAV and the ground sensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


@dataclass(frozen=True)
class ChannelGains:
    gain2: np.ndarray  # (K, N) power gains |h_k[n]|^2
    phase: np.ndarray | None = None  # (K, N) unit-modulus complex phases

    @property
    def coefficients(self) -> np.ndarray:
        """Complex channel h = sqrt(gain2) * phase (phase defaults to 1)."""
        amp = np.sqrt(self.gain2)
        return amp if self.phase is None else amp * self.phase


def horizontal_dist2(q: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Squared horizontal UAV-sensor distances, shape (K, N), for slots 1..N."""
    q = np.asarray(q, dtype=float)
    if q.shape != (scenario.num_slots + 1, 2):
        raise ValueError(f"trajectory must have shape {(scenario.num_slots + 1, 2)}, got {q.shape}")
    diff = q[None, 1:, :] - scenario.positions
    return np.einsum("knd,knd->kn", diff, diff)


def gains_from_dist2(dist2, scenario: Scenario) -> np.ndarray:
    return scenario.ref_channel_gain / (scenario.uav_altitude ** 2 + dist2)


def channel_gains(q: np.ndarray, scenario: Scenario, phase_seed: int | None = None) -> ChannelGains:
    """Path-loss gains beta0 / (H^2 + ||q[n] - w_k[n]||^2) for slots 1..N.

    Row 0 of ``q`` is the departure point and carries no transmission. With
    ``phase_seed`` set, i.i.d. uniform phases are attached for Monte-Carlo use.
    """
    gain2 = gains_from_dist2(horizontal_dist2(q, scenario), scenario)
    phase = None
    if phase_seed is not None:
        phase = random_phases(gain2.shape, np.random.default_rng(phase_seed))
    return ChannelGains(gain2, phase)


def random_phases(shape, rng: np.random.Generator) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(shape))


def aligned_precoder(power, h):
    """Precoder sqrt(p) * conj(h) / |h| that makes b*h real and nonnegative."""
    power = np.asarray(power, dtype=float)
    h = np.asarray(h, dtype=complex)
    mag = np.abs(h)
    if np.any(mag == 0):
        raise ValueError("channel magnitude must be nonzero")
    if np.any(power < 0):
        raise ValueError("power must be nonnegative")
    b = np.sqrt(power) * np.conj(h) / mag
    return b if b.ndim else complex(b)

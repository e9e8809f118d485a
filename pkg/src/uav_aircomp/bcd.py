"""Outer block coordinate descent and the baseline strategies."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import channel_gains
from .eta_solver import optimal_eta
from .mse import time_averaged_mse
from .scenario import Scenario
from .theta_solver import optimal_theta
from .trajectory_admm import solve_trajectory

log = logging.getLogger(__name__)

# absolute slack allowed when checking that the outer objective never increases
MONOTONE_SLACK = 1e-9


@dataclass
class SolveResult:
    """Output of one strategy run.

    ``powers`` are the transmit powers recovered as theta / |h|^2 on the
    returned trajectory. ``mse_per_iteration[0]`` is the objective at the
    initial point (eta optimised for the initial theta).
    """

    strategy: str
    trajectory: np.ndarray  # (N+1, 2)
    theta: np.ndarray  # (K, N)
    eta: np.ndarray  # (N,)
    powers: np.ndarray  # (K, N) watts
    mse_per_iteration: list[float]
    iterations: int
    wall_time: float
    converged: bool
    admm_iterations: list[int] = field(default_factory=list)
    admm_outcomes: list[str] = field(default_factory=list)
    admm_cap_hits: int = 0
    admm_iter_time: float = 0.0
    inner_histories: list = field(default_factory=list)

    @property
    def mse(self) -> float:
        return self.mse_per_iteration[-1]

    @property
    def cap_hit(self) -> bool:
        """True if the outer loop or any trajectory solve stopped on its iteration cap."""
        return (not self.converged) or self.admm_cap_hits > 0


def fly_hover_trajectory(scenario: Scenario) -> np.ndarray:
    """Straight flight at top speed towards the sensors' centre at the last slot, then hover."""
    q0 = scenario.uav_initial
    target = scenario.positions[:, -1].mean(axis=0)
    offset = target - q0
    length = float(np.hypot(offset[0], offset[1]))
    direction = offset / length if length > 0 else np.zeros(2)
    travelled = np.minimum(np.arange(scenario.num_slots + 1) * scenario.max_step, length)
    q = q0 + travelled[:, None] * direction
    if length > 0 and travelled[-1] >= length:
        q[travelled >= length] = target
    return q


def static_trajectory(scenario: Scenario) -> np.ndarray:
    return np.tile(scenario.uav_initial, (scenario.num_slots + 1, 1))


def _decreased_enough(prev: float, cur: float, tol: float) -> bool:
    """The relative-decrease stopping rule; True means keep going."""
    if cur <= 0:
        return False
    return (prev - cur) / cur >= tol


def _result(strategy, scenario, q, theta, eta, history, iterations, converged, t0, **extra):
    gain2 = channel_gains(q, scenario).gain2
    return SolveResult(strategy=strategy, trajectory=q, theta=theta, eta=eta, powers=theta / gain2,
                       mse_per_iteration=history, iterations=iterations,
                       wall_time=time.perf_counter() - t0, converged=converged, **extra)


def _power_control(strategy: str, scenario: Scenario, q: np.ndarray, t0: float) -> SolveResult:
    """Alternate eta and theta steps on a fixed trajectory."""
    gain2 = channel_gains(q, scenario).gain2
    theta = scenario.avg_powers[:, None] * gain2
    eta, _ = optimal_eta(theta, scenario.noise_power)
    history = [time_averaged_mse(theta, eta, scenario.noise_power)]
    converged = False
    it = 0
    while it < scenario.max_bcd_iters:
        it += 1
        theta = optimal_theta(eta, gain2, scenario)
        eta, _ = optimal_eta(theta, scenario.noise_power)
        history.append(time_averaged_mse(theta, eta, scenario.noise_power))
        if not _decreased_enough(history[-2], history[-1], scenario.bcd_tolerance):
            converged = True
            break
    return _result(strategy, scenario, q, theta, eta, history, it, converged, t0)


def solve_static_uav(scenario: Scenario) -> SolveResult:
    """UAV parked over its start point; only eta and theta are optimised."""
    t0 = time.perf_counter()
    return _power_control("static", scenario, static_trajectory(scenario), t0)


def solve_fly_hover(scenario: Scenario) -> SolveResult:
    """Fly-hover trajectory with optimised eta and theta."""
    t0 = time.perf_counter()
    return _power_control("fly-hover", scenario, fly_hover_trajectory(scenario), t0)


def solve_bcd_admm(scenario: Scenario, *, record: bool = False, initial_trajectory=None) -> SolveResult:
    """Alternate the eta, theta and trajectory blocks until the relative decrease drops below tolerance.

    The trajectory starts from fly-hover and the powers from the average
    budgets. Each trajectory step keeps the current theta feasible, so the
    objective recorded after every theta step can only go down.
    """
    t0 = time.perf_counter()
    q = fly_hover_trajectory(scenario) if initial_trajectory is None else np.asarray(initial_trajectory, float)
    gain2 = channel_gains(q, scenario).gain2
    theta = scenario.avg_powers[:, None] * gain2
    eta, _ = optimal_eta(theta, scenario.noise_power)
    history = [time_averaged_mse(theta, eta, scenario.noise_power)]
    admm_iters, outcomes, histories = [], [], []
    cap_hits, iter_time = 0, 0.0
    converged = False
    it = 0
    while it < scenario.max_bcd_iters:
        it += 1
        eta, _ = optimal_eta(theta, scenario.noise_power)
        theta = optimal_theta(eta, gain2, scenario)
        value = time_averaged_mse(theta, eta, scenario.noise_power)
        if value > history[-1] + MONOTONE_SLACK:
            log.warning("outer objective rose from %.6g to %.6g at iteration %d", history[-1], value, it)
        history.append(value)
        if not _decreased_enough(history[-2], history[-1], scenario.bcd_tolerance):
            converged = True
            break
        res = solve_trajectory(theta, scenario, q, eta, record=record)
        admm_iters.append(res.iterations)
        outcomes.append(res.outcome)
        cap_hits += not res.converged
        iter_time += res.iter_time
        if record:
            histories.append(res.history)
        q = res.q
        gain2 = channel_gains(q, scenario).gain2
    if not converged:
        log.warning("BCD stopped at the iteration cap (%d)", scenario.max_bcd_iters)
    return _result("bcd-admm", scenario, q, theta, eta, history, it, converged, t0,
                   admm_iterations=admm_iters, admm_outcomes=outcomes, admm_cap_hits=cap_hits,
                   admm_iter_time=iter_time, inner_histories=histories)


def solve_to_wo_pc(scenario: Scenario) -> SolveResult:
    """Trajectory and eta optimised with every sensor transmitting at its average budget.

    The trajectory step minimises the weighted distance with the previous
    iterate's theta as weights, without power constraints (constant average
    power meets both budgets everywhere). A new trajectory is kept only if
    it does not increase the true objective.
    """
    t0 = time.perf_counter()
    noise = scenario.noise_power

    def evaluate(q):
        th = scenario.avg_powers[:, None] * channel_gains(q, scenario).gain2
        e, _ = optimal_eta(th, noise)
        return th, e, time_averaged_mse(th, e, noise)

    q = fly_hover_trajectory(scenario)
    theta, eta, value = evaluate(q)
    history = [value]
    admm_iters, outcomes = [], []
    cap_hits, iter_time = 0, 0.0
    converged = False
    it = 0
    while it < scenario.max_bcd_iters:
        it += 1
        res = solve_trajectory(theta, scenario, q, eta, peak_constraints=False, avg_constraints=False)
        admm_iters.append(res.iterations)
        cap_hits += not res.converged
        iter_time += res.iter_time
        th, e, value = evaluate(res.q)
        if value <= history[-1]:
            q, theta, eta = res.q, th, e
            outcomes.append(res.outcome)
        else:
            value = history[-1]
            outcomes.append("rejected")
        history.append(value)
        if not _decreased_enough(history[-2], history[-1], scenario.bcd_tolerance):
            converged = True
            break
    return _result("to-wo-pc", scenario, q, theta, eta, history, it, converged, t0,
                   admm_iterations=admm_iters, admm_outcomes=outcomes, admm_cap_hits=cap_hits,
                   admm_iter_time=iter_time)


STRATEGIES = {
    "bcd-admm": solve_bcd_admm,
    "static": solve_static_uav,
    "fly-hover": solve_fly_hover,
    "to-wo-pc": solve_to_wo_pc,
}


def solve(scenario: Scenario, strategy: str) -> SolveResult:
    try:
        fn = STRATEGIES[strategy]
    except KeyError:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}") from None
    return fn(scenario)

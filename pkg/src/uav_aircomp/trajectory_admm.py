"""Trajectory step: weighted-sum-distance minimisation under speed, start-point and power-ball
constraints, solved by ADMM with closed-form block updates.

The problem for fixed signal quality factors theta is::

    minimise    sum_n sum_k theta_k[n] ||q[n] - w_k[n]||^2
    subject to  ||q[n] - w_k[n]||^2 <= Phat_k[n]                 (peak-power balls)
                sum_n theta_k[n] ||q[n] - w_k[n]||^2 <= Ptil_k   (average-power ellipsoids)
                ||q[n] - q[n-1]|| <= V_max delta,  q[0] = q_I

It is split with copies Gamma_k = q, V_k = B1_k q and z = A1 q, where
B1_k = diag(1, sqrt(theta_k)) and A1 is the first-difference operator. All
(K, N+1, 2) stacks index sensors on axis 0 and waypoints on axis 1.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .channel import horizontal_dist2
from .scenario import AdmmParams, Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryBounds:
    peak_radius2: np.ndarray  # (K, N); +inf where theta = 0
    avg_radius2: np.ndarray  # (K,)


def build_bounds(theta: np.ndarray, scenario: Scenario) -> TrajectoryBounds:
    """Ball radii implied by keeping theta feasible under the power budgets.

    Peak: beta0 P_k / theta_k[n] - H^2. Average: N beta0 Pbar_k - H^2 sum_n theta_k[n].
    """
    theta = np.asarray(theta, dtype=float)
    beta0, h2 = scenario.ref_channel_gain, scenario.uav_altitude ** 2
    peak = scenario.peak_powers[:, None]
    with np.errstate(divide="ignore"):
        peak_r2 = np.where(theta > 0, beta0 * peak / np.where(theta > 0, theta, 1.0) - h2, np.inf)
    avg_r2 = scenario.num_slots * beta0 * scenario.avg_powers - h2 * theta.sum(axis=1)
    if np.any(avg_r2 < 0):
        raise ValueError("theta violates the average power budget for every trajectory")
    return TrajectoryBounds(peak_r2, avg_r2)


def project_ball(x, center, radius):
    """Euclidean projection onto the ball(s) ``||x - center|| <= radius`` along the last axis.

    ``radius`` broadcasts against ``x[..., 0]``; infinite radii leave x unchanged.
    """
    x = np.asarray(x, dtype=float)
    d = x - center
    norm = np.sqrt(np.sum(d * d, axis=-1))
    radius = np.broadcast_to(np.asarray(radius, dtype=float), norm.shape)
    outside = np.isfinite(radius) & (norm > radius)
    scale = np.ones_like(norm)
    np.divide(radius, norm, out=scale, where=outside)
    return center + d * scale[..., None]


def project_frobenius_ball(x, center, radius):
    """Projection of whole matrices onto ``||X - C||_F <= radius`` (leading axis = batch)."""
    x = np.asarray(x, dtype=float)
    d = x - center
    norm = np.sqrt(np.sum(d * d, axis=tuple(range(1, d.ndim))))
    radius = np.asarray(radius, dtype=float)
    outside = np.isfinite(radius) & (norm > radius)
    scale = np.ones_like(norm)
    np.divide(radius, norm, out=scale, where=outside)
    return center + d * scale.reshape((-1,) + (1,) * (d.ndim - 1))


def weighted_distance(q: np.ndarray, theta: np.ndarray, scenario: Scenario) -> float:
    """Objective of the trajectory step: sum_n sum_k theta_k[n] ||q[n] - w_k[n]||^2."""
    return float(np.sum(theta * horizontal_dist2(q, scenario)))


def constraint_violation(q: np.ndarray, theta: np.ndarray, scenario: Scenario,
                         bounds: TrajectoryBounds | None = None) -> dict[str, float]:
    """Largest relative violation of each constraint family (0 when satisfied).

    Power constraints are measured as transmit power over its budget minus
    one, speed as step length over the maximum step minus one; the initial
    condition is the absolute offset from q_I in metres.
    """
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d2 = horizontal_dist2(q, scenario)
    power = theta * (scenario.uav_altitude ** 2 + d2) / scenario.ref_channel_gain
    peak = np.max(power / scenario.peak_powers[:, None] - 1.0, initial=0.0)
    n = scenario.num_slots
    avg = np.max(power.sum(axis=1) / (n * scenario.avg_powers) - 1.0, initial=0.0)
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    return {
        "peak": max(float(peak), 0.0),
        "average": max(float(avg), 0.0),
        "speed": max(float(np.max(steps / scenario.max_step - 1.0, initial=0.0)), 0.0),
        "initial": float(np.max(np.abs(q[0] - scenario.uav_initial))),
    }


def is_feasible(q, theta, scenario, bounds=None, rtol: float = 1e-12) -> bool:
    """Feasibility with a relative slack that absorbs rounding in the radii themselves."""
    if bounds is None:
        bounds = build_bounds(theta, scenario)
    q = np.asarray(q, dtype=float)
    d2 = horizontal_dist2(q, scenario)
    h2 = scenario.uav_altitude ** 2
    finite = np.isfinite(bounds.peak_radius2)
    peak_ok = np.all(~finite | (d2 <= np.where(finite, bounds.peak_radius2, 0.0) + rtol * (h2 + d2)))
    scale = scenario.num_slots * scenario.ref_channel_gain * scenario.avg_powers
    avg_ok = np.all(np.sum(theta * d2, axis=1) <= bounds.avg_radius2 + rtol * scale)
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    speed_ok = np.all(steps <= scenario.max_step * (1 + rtol))
    return bool(peak_ok and avg_ok and speed_ok and np.array_equal(q[0], scenario.uav_initial))


@dataclass
class AdmmState:
    gamma: np.ndarray  # (K, N+1, 2)
    v: np.ndarray  # (K, N+1, 2)
    z: np.ndarray  # (N, 2)
    q: np.ndarray  # (N+1, 2)
    lam: np.ndarray  # (K, N+1, 2)
    xi: np.ndarray  # (K, N+1, 2)
    tau: np.ndarray  # (N, 2)
    iteration: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, q0: np.ndarray, num_sensors: int) -> "AdmmState":
        q0 = np.array(q0, dtype=float)
        stack = np.broadcast_to(q0, (num_sensors,) + q0.shape).copy()
        zeros = np.zeros_like(stack)
        return cls(gamma=stack, v=stack.copy(), z=np.diff(q0, axis=0), q=q0,
                   lam=zeros, xi=zeros.copy(), tau=np.zeros((q0.shape[0] - 1, 2)))


def first_difference(num_slots: int) -> np.ndarray:
    """Dense A1 in R^{N x (N+1)}: (A1 q)[n] = q[n+1] - q[n]."""
    a1 = np.zeros((num_slots, num_slots + 1))
    idx = np.arange(num_slots)
    a1[idx, idx] = -1.0
    a1[idx, idx + 1] = 1.0
    return a1


class TrajectoryProblem:
    """Precomputed data of one trajectory-step instance.

    Weights are rescaled by ``weight_scale`` so that they sum to
    ``weight_total``. The minimiser and feasible set are unchanged, but the
    penalties then act on an objective whose size does not depend on the
    physical units of theta. A fixed total (rather than a fixed mean) keeps
    the objective from overwhelming the speed penalty on long horizons.
    """

    weight_total = 40.0

    def __init__(self, theta: np.ndarray, scenario: Scenario, params: AdmmParams | None = None,
                 bounds: TrajectoryBounds | None = None, q_update: str = "exact",
                 peak_constraints: bool = True, avg_constraints: bool = True):
        theta = np.asarray(theta, dtype=float)
        self.scenario = scenario
        self.params = params or scenario.admm
        self.theta = theta
        k, n = theta.shape
        self.num_sensors, self.num_slots = k, n
        self.bounds = bounds if bounds is not None else build_bounds(theta, scenario)
        total = theta.sum()
        self.weight_scale = self.weight_total / total if total > 0 else 1.0
        # B1_k diagonal (row 0 is 1) and B2_k = [q_I; w_k]
        self.b1 = np.ones((k, n + 1))
        self.b1[:, 1:] = np.sqrt(self.weight_scale * theta)
        self.b2 = np.empty((k, n + 1, 2))
        self.b2[:, 0] = scenario.uav_initial
        self.b2[:, 1:] = scenario.positions
        self.b1b2 = self.b1[..., None] * self.b2
        self.peak_radius = np.full((k, n + 1), np.inf)
        if peak_constraints:
            self.peak_radius[:, 1:] = np.sqrt(np.maximum(self.bounds.peak_radius2, 0.0))
        self.avg_radius = (np.sqrt(np.maximum(self.weight_scale * self.bounds.avg_radius2, 0.0))
                           if avg_constraints else np.full(k, np.inf))
        self.max_step = scenario.max_step
        self.q_update_mode = q_update
        self._factorize()

    def _factorize(self):
        p = self.params
        k = self.num_sensors
        n1 = self.num_slots + 1
        b1sq = np.sum(self.b1 ** 2, axis=0)
        lap = np.full(n1, 2.0)
        lap[0] = lap[-1] = 1.0
        diag = p.rho1 * k + (p.rho2 + 2.0) * b1sq + p.rho3 * lap
        off = np.full(n1 - 1, -p.rho3)
        self.f_diag, self.f_off = diag, off
        if self.q_update_mode == "exact":
            # q[0] is pinned: factor the trailing N x N block only
            ab = np.zeros((2, n1 - 1))
            ab[1] = diag[1:]
            ab[0, 1:] = off[1:]
            self._chol = cholesky_banded(ab)
        elif self.q_update_mode == "literal":
            ab = np.zeros((2, n1))
            ab[1] = diag
            ab[0, 1:] = off
            self._chol = cholesky_banded(ab)
        else:
            raise ValueError(f"unknown q_update mode {self.q_update_mode!r}")

    def f_matrix(self) -> np.ndarray:
        """Dense F = rho1 K I + (rho2 + 2) sum_k B1_k^T B1_k + rho3 A1^T A1."""
        return np.diag(self.f_diag) + np.diag(self.f_off, 1) + np.diag(self.f_off, -1)

    def objective(self, q: np.ndarray) -> float:
        """Weighted distance in the original theta units."""
        return weighted_distance(q, self.theta, self.scenario)

    # -- block updates ------------------------------------------------------

    def update_gamma(self, s: AdmmState) -> np.ndarray:
        gamma = project_ball(s.q[None] - s.lam, self.b2, self.peak_radius)
        gamma[:, 0] = s.q[0]
        return gamma

    def update_v(self, s: AdmmState) -> np.ndarray:
        return project_frobenius_ball(self.b1[..., None] * s.q[None] - s.xi, self.b1b2, self.avg_radius)

    def update_z(self, s: AdmmState) -> np.ndarray:
        return project_ball(np.diff(s.q, axis=0) - s.tau, 0.0, self.max_step)

    def rhs(self, s: AdmmState) -> np.ndarray:
        """J = sum_k [2 B1^T B1 B2 + rho1 (Gamma + lam) + rho2 B1^T (V + xi)] + rho3 A1^T (z + tau)."""
        p = self.params
        j = np.sum(2.0 * self.b1[..., None] * self.b1b2 + p.rho1 * (s.gamma + s.lam)
                   + p.rho2 * self.b1[..., None] * (s.v + s.xi), axis=0)
        zt = p.rho3 * (s.z + s.tau)
        j[:-1] -= zt
        j[1:] += zt
        return j

    def update_q(self, s: AdmmState) -> np.ndarray:
        j = self.rhs(s)
        q_init = self.scenario.uav_initial
        if self.q_update_mode == "exact":
            # minimise the q-subproblem subject to q[0] = q_I exactly
            r = j[1:].copy()
            r[0] -= self.f_off[0] * q_init
            q = np.empty_like(j)
            q[0] = q_init
            q[1:] = cho_solve_banded((self._chol, False), r)
            return q
        q = cho_solve_banded((self._chol, False), j)
        q[0] = q_init
        return q

    def update_duals(self, s: AdmmState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lam = s.lam + s.gamma - s.q[None]
        xi = s.xi + s.v - self.b1[..., None] * s.q[None]
        tau = s.tau + s.z - np.diff(s.q, axis=0)
        return lam, xi, tau

    # -- driver ---------------------------------------------------------------

    def residuals(self, s: AdmmState, q_prev: np.ndarray) -> tuple[float, float, float, float]:
        """Primal/dual residual norms and their stopping thresholds."""
        p = self.params
        b1q = self.b1[..., None] * s.q[None]
        aq = np.diff(s.q, axis=0)
        r_gamma = s.gamma - s.q[None]
        r_v = s.v - b1q
        r_z = s.z - aq
        primal = np.sqrt(np.sum(r_gamma ** 2) + np.sum(r_v ** 2) + np.sum(r_z ** 2))
        dq = s.q - q_prev
        dual = np.sqrt(self.num_sensors * p.rho1 ** 2 * np.sum(dq ** 2)
                       + p.rho2 ** 2 * np.sum((self.b1[..., None] * dq[None]) ** 2)
                       + p.rho3 ** 2 * np.sum(np.diff(dq, axis=0) ** 2))
        n_primal = 2 * (2 * self.num_sensors * (self.num_slots + 1) + self.num_slots)
        n_dual = 2 * (self.num_slots + 1)
        # positions are measured from q_I so the relative test does not depend on the origin
        q_i = self.scenario.uav_initial
        b1qi = self.b1[..., None] * q_i
        rel = s.q - q_i
        lhs = np.sqrt(np.sum((s.gamma - q_i) ** 2) + np.sum((s.v - b1qi) ** 2) + np.sum(s.z ** 2))
        rhs = np.sqrt(self.num_sensors * np.sum(rel ** 2) + np.sum((b1q - b1qi) ** 2) + np.sum(aq ** 2))
        eps_pri = np.sqrt(n_primal) * p.eps_abs + p.eps_rel * max(lhs, rhs)
        dual_var = np.sqrt(p.rho1 ** 2 * np.sum(s.lam ** 2) + p.rho2 ** 2 * np.sum(s.xi ** 2)
                           + p.rho3 ** 2 * np.sum(s.tau ** 2))
        eps_dual = np.sqrt(n_dual) * p.eps_abs + p.eps_rel * dual_var
        return primal, dual, eps_pri, eps_dual

    def step(self, s: AdmmState) -> np.ndarray:
        """One ADMM iteration in place; returns the previous q."""
        q_prev = s.q
        s.gamma = self.update_gamma(s)
        s.v = self.update_v(s)
        s.z = self.update_z(s)
        s.q = self.update_q(s)
        s.lam, s.xi, s.tau = self.update_duals(s)
        s.iteration += 1
        return q_prev

    def run(self, warm_start: np.ndarray, record: bool = False,
            max_iters: int | None = None) -> tuple[AdmmState, bool]:
        state = AdmmState.initial(warm_start, self.num_sensors)
        max_iters = max_iters or self.params.max_iters
        converged = False
        while state.iteration < max_iters:
            q_prev = self.step(state)
            primal, dual, eps_pri, eps_dual = self.residuals(state, q_prev)
            if record:
                state.history.append((state.iteration, self.objective(state.q), primal, dual))
            if primal <= eps_pri and dual <= eps_dual:
                converged = True
                break
        return state, converged


def restore_speed(q: np.ndarray, q_init: np.ndarray, max_step: float) -> np.ndarray:
    """Forward pass from q_I clipping every step to at most ``max_step``."""
    out = np.empty_like(q)
    out[0] = q_init
    for n in range(1, len(q)):
        step = q[n] - out[n - 1]
        norm = np.hypot(step[0], step[1])
        if norm > max_step:
            step = step * (max_step / norm)
        out[n] = out[n - 1] + step
    return out


@dataclass
class TrajectoryResult:
    q: np.ndarray
    objective: float
    iterations: int
    converged: bool
    outcome: str  # "admm", "speed-clipped", "blended", "warm-start"
    setup_time: float
    iter_time: float
    history: list


def solve_trajectory(theta: np.ndarray, scenario: Scenario, warm_start: np.ndarray, eta=None, *,
                     params: AdmmParams | None = None, record: bool = False,
                     peak_constraints: bool = True, avg_constraints: bool = True,
                     q_update: str = "exact", max_iters: int | None = None) -> TrajectoryResult:
    """Run the ADMM and return a trajectory that is feasible for the constraints.

    ``eta`` is accepted for symmetry with the other block solvers and is not
    used: the trajectory step depends only on theta and geometry.
    ADMM iterates are only asymptotically feasible, so the final q is
    repaired: first by clipping the speed profile, and if that breaks a power
    ball, by moving back along the segment towards the (feasible) warm start.
    The warm start is returned if neither improves on its objective.
    """
    del eta
    t0 = time.perf_counter()
    warm_start = np.asarray(warm_start, dtype=float)
    problem = TrajectoryProblem(theta, scenario, params, q_update=q_update,
                                peak_constraints=peak_constraints, avg_constraints=avg_constraints)
    t1 = time.perf_counter()
    state, converged = problem.run(warm_start, record=record, max_iters=max_iters)
    t2 = time.perf_counter()
    if not converged:
        log.warning("trajectory ADMM hit the iteration cap (%d)", state.iteration)

    def feasible(q):
        if not (peak_constraints or avg_constraints):
            steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
            return bool(np.all(steps <= scenario.max_step * (1 + 1e-12)))
        return is_feasible(q, theta, scenario, problem.bounds)

    base = problem.objective(warm_start)
    q_out, outcome = warm_start, "warm-start"
    candidate = restore_speed(state.q, scenario.uav_initial, scenario.max_step)
    if feasible(candidate):
        q_out, outcome = candidate, "admm" if np.allclose(candidate, state.q, rtol=0, atol=1e-9) else "speed-clipped"
    elif feasible(warm_start):
        # largest t with warm + t (candidate - warm) feasible; all sets are convex
        lo, hi = 0.0, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if feasible(warm_start + mid * (candidate - warm_start)):
                lo = mid
            else:
                hi = mid
        if lo > 0:
            q_out, outcome = warm_start + lo * (candidate - warm_start), "blended"
            q_out[0] = scenario.uav_initial
    if outcome != "warm-start" and problem.objective(q_out) > base:
        q_out, outcome = warm_start, "warm-start"
    return TrajectoryResult(q=q_out, objective=problem.objective(q_out), iterations=state.iteration,
                            converged=converged, outcome=outcome, setup_time=t1 - t0,
                            iter_time=t2 - t1, history=state.history)

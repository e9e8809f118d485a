"""Independent reference solvers for tests and acceptance runs.

Nothing here is used by the main pipeline, and nothing here imports from
the solver modules: each oracle rebuilds its problem from raw arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import minimize

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OracleError(RuntimeError):
    pass


# -- 1-D normalizing factor ---------------------------------------------------

def golden_section_eta(theta_col, noise_power: float, tol: float = 1e-15) -> float:
    """1/nu* for nu* minimising sum_k (sqrt(theta_k) nu - 1)^2 + sigma^2 nu^2 by golden-section search.

    Points are compared through the factored difference
    f(a) - f(b) = (a - b) [(sum_k theta_k + sigma^2)(a + b) - 2 sum_k r_k], r_k = sqrt(theta_k),
    which keeps the comparison exact near the flat minimum.
    """
    theta_col = np.asarray(theta_col, dtype=float)
    r = np.sqrt(theta_col)
    s1 = float(r.sum())
    if s1 <= 0:
        raise ValueError("need at least one positive theta")
    s2 = float(theta_col.sum()) + noise_power

    def less(a, b):  # f(a) < f(b)
        return (a - b) * (s2 * (a + b) - 2.0 * s1) < 0

    lo = 1e-12 / float(r.max())
    hi = 1.0 / float(r.max())
    while not less(hi, 2.0 * hi):
        hi *= 2.0
    hi *= 2.0
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    while hi - lo > tol * hi:
        if less(x1, x2):
            hi, x2 = x2, x1
            x1 = hi - GOLDEN * (hi - lo)
        else:
            lo, x1 = x1, x2
            x2 = lo + GOLDEN * (hi - lo)
    return 1.0 / (0.5 * (lo + hi))


# -- projected gradient ---------------------------------------------------------

@dataclass
class PGResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def cyclic_projections(x0: np.ndarray, projectors: Sequence[Callable], feasible: Callable,
                       max_sweeps: int = 1000) -> np.ndarray:
    """Apply each set's projector in turn until ``feasible(x)`` holds.

    Raises :class:`OracleError` if the point is still infeasible after
    ``max_sweeps`` full sweeps.
    """
    x = np.array(x0, dtype=float)
    for _ in range(max_sweeps):
        if feasible(x):
            return x
        for proj in projectors:
            x = proj(x)
    if feasible(x):
        return x
    raise OracleError("cyclic projections did not reach feasibility")


def projected_gradient_qcqp(fun: Callable, grad: Callable, project: Callable, x0: np.ndarray, *,
                            metric: np.ndarray | None = None, tol: float = 1e-8,
                            max_iter: int = 100000, step0: float = 1.0,
                            feasible: Callable | None = None) -> PGResult:
    """Projected gradient with backtracking in the diagonal metric ``metric``.

    ``project(y)`` must return the projection onto the feasible set in the
    same metric. Stops when the metric norm of the gradient mapping falls
    below ``tol`` (relative to the gradient at the start). The best feasible
    iterate is returned.
    """
    x = np.array(x0, dtype=float)
    m = np.ones_like(x) if metric is None else np.broadcast_to(metric, x.shape)
    fx = fun(x)
    g = grad(x)
    g0 = max(float(np.sqrt(np.sum(g * g / m))), 1e-300)
    best = (fx, x.copy()) if feasible is None or feasible(x) else (np.inf, x.copy())
    t = step0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        while True:
            x_new = project(x - t * g / m)
            d = x_new - x
            f_new = fun(x_new)
            if f_new <= fx + np.sum(g * d) + np.sum(m * d * d) / (2 * t) + 1e-15 * abs(fx):
                break
            t *= 0.5
            if t < 1e-30:
                raise OracleError("line search failed")
        mapping = float(np.sqrt(np.sum(m * d * d))) / t
        x, fx = x_new, f_new
        if fx < best[0] and (feasible is None or feasible(x)):
            best = (fx, x.copy())
        if mapping <= tol * g0:
            converged = True
            break
        g = grad(x)
        t = min(2.0 * t, step0)
    return PGResult(best[1], float(best[0]), it, converged)


# -- per-sensor power control (signal quality factors) -----------------------------

def _project_box_halfspace(y, lower, upper, a, budget, m=None):
    """Projection onto {lower <= x <= upper, a.x <= budget} (a > 0) in the metric diag(m).

    The projection is clip(y - mu a/m) with the scalar mu >= 0 making the
    budget tight; a.x is piecewise linear in mu, so mu is found exactly from
    its values at the breakpoints.
    """
    step = a if m is None else a / m
    x = np.clip(y, lower, upper)
    if a @ x <= budget:
        return x
    knots = np.unique(np.concatenate([(y - upper) / step, (y - lower) / step, [0.0]]))
    knots = knots[knots >= 0]
    used = np.clip(y[None] - knots[:, None] * step, lower, upper) @ a  # nonincreasing in mu
    j = int(np.searchsorted(-used, -budget))  # first knot with used <= budget
    if j == 0:
        return x
    if j == len(knots):
        mu = knots[-1]
    else:
        mu0, mu1, f0, f1 = knots[j - 1], knots[j], used[j - 1], used[j]
        mu = mu1 if f0 == f1 else mu0 + (f0 - budget) * (mu1 - mu0) / (f0 - f1)
    x = np.clip(y - mu * step, lower, upper)
    return x


def theta_oracle(eta, gain2, peak: float, avg: float, max_restarts: int = 100) -> tuple[np.ndarray, float]:
    """Minimise sum_n (sqrt(theta_n)/eta_n - 1)^2 s.t. theta_n <= P g_n, sum theta_n / g_n <= N Pbar.

    Works in u = theta / eta^2, where the objective is sum (sqrt(u) - 1)^2 and
    the constraints are a box and one half-space. The curvature of the
    objective varies by orders of magnitude across coordinates, so projected
    gradient is restarted in the metric of the current diagonal Hessian
    until a restart no longer changes the objective. Returns ``(theta, objective)``.
    """
    eta = np.asarray(eta, dtype=float)
    gain2 = np.asarray(gain2, dtype=float)
    n = eta.size
    upper = peak * gain2 / eta ** 2
    a = eta ** 2 / gain2
    budget = n * avg
    lower = 1e-14 * upper

    def fun(u):
        return float(np.sum((np.sqrt(u) - 1.0) ** 2))

    def grad(u):
        return 1.0 - 1.0 / np.sqrt(u)

    u = _project_box_halfspace(np.minimum(upper, budget / (n * a)) * 0.5, lower, upper, a, budget)
    fu = fun(u)
    for _ in range(max_restarts):
        m = 0.5 * u ** -1.5
        res = projected_gradient_qcqp(fun, grad, lambda y: _project_box_halfspace(y, lower, upper, a, budget, m),
                                      u, metric=m, tol=1e-12, max_iter=20)
        moved = float(np.max(np.abs(res.x - u) / u))
        gain = fu - res.fun
        u, fu = res.x, res.fun
        if moved <= 1e-12 or gain <= 1e-16 * (1.0 + fu):
            break
    return u * eta ** 2, fun(u)


# -- trajectory step -------------------------------------------------------------------

def _ellipsoid_multipliers(d2: np.ndarray, wt: np.ndarray, cap: np.ndarray, iters: int = 200) -> np.ndarray:
    """Row-wise mu >= 0 with sum_n wt_n d2_n / (1 + mu wt_n)^2 = cap (mu = 0 for rows already inside).

    Safeguarded Newton on value(mu)^(-1/2) - cap^(-1/2), bracketed by bisection.
    """
    val0 = np.sum(wt * d2, axis=1)
    mu = np.zeros(len(cap))
    active = val0 > cap
    if not active.any():
        return mu
    cap = np.maximum(cap, 1e-300)
    lo = np.zeros_like(mu)
    hi = np.full_like(mu, np.inf)
    for _ in range(iters):
        den = 1.0 + mu[:, None] * wt
        val = np.sum(wt * d2 / den ** 2, axis=1)
        over = val > cap
        lo = np.where(active & over, mu, lo)
        hi = np.where(active & ~over, mu, hi)
        dval = -2.0 * np.sum(wt ** 2 * d2 / den ** 3, axis=1)
        psi = val ** -0.5 - cap ** -0.5
        dpsi = np.maximum(-0.5 * val ** -1.5 * dval, 1e-300)
        cand = mu - psi / dpsi
        bad = ~((cand > lo) & (cand < hi))
        cand = np.where(bad, np.where(np.isfinite(hi), 0.5 * (lo + hi), 2.0 * lo + 1.0), cand)
        cand = np.where(active, cand, 0.0)
        done = np.abs(cand - mu) <= 1e-15 * np.maximum(mu, 1e-300)
        mu = cand
        if np.all(done | ~active):
            break
    return mu


def trajectory_oracle(theta: np.ndarray, positions: np.ndarray, q_init, altitude: float,
                      ref_gain: float, peak_powers, avg_powers, max_step: float, start: np.ndarray,
                      *, peak_constraints: bool = True, avg_constraints: bool = True,
                      max_iter: int = 20000) -> tuple[np.ndarray, float]:
    """Reference solution of the weighted-distance trajectory problem.

    The objective sum_k,n theta ||q_n - w_kn||^2 equals a weighted distance
    to the per-slot weighted centroid, so projected gradient in the metric of
    its diagonal Hessian reaches the optimum in one step once the projection
    is exact. The projection onto the intersection of peak balls, average
    ellipsoids and the speed/initial set is computed by maximising its
    Lagrangian dual over nonnegative multipliers (L-BFGS-B), then made
    exactly feasible by cyclic projections onto the individual sets.
    Returns ``(q, objective)`` with ``q`` of shape (N+1, 2).
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(positions, dtype=float)
    q_init = np.asarray(q_init, dtype=float)
    k, n = theta.shape
    h2 = altitude ** 2
    c = k * n / theta.sum()  # unit-free weights; minimiser unchanged
    wt = c * theta
    a = wt.sum(axis=0)
    floor = 1e-9 * a.mean()
    centroid = np.where((a > floor)[:, None], np.einsum("kn,kni->ni", wt, w) / np.maximum(a, floor)[:, None],
                        w.mean(axis=0))
    a = np.maximum(a, floor)
    metric = 2.0 * a  # Hessian of the objective, per slot
    r = float(max_step)

    pos = theta > 0
    peak_r2 = np.full((k, n), np.inf)
    peak_r2[pos] = ref_gain * np.broadcast_to(np.asarray(peak_powers, float)[:, None], (k, n))[pos] / theta[pos] - h2
    avg_cap = c * (n * ref_gain * np.asarray(avg_powers, float) - h2 * theta.sum(axis=1))
    if peak_constraints and np.any(peak_r2 < 0):
        raise OracleError("empty peak-power ball")
    if avg_constraints and np.any(avg_cap < 0):
        raise OracleError("empty average-power set")
    radius = np.sqrt(peak_r2)

    def fun(x):
        d = x[None] - w
        return float(np.sum(wt * np.sum(d * d, axis=-1)))

    def grad(x):
        return 2.0 * np.sum(wt[..., None] * (x[None] - w), axis=0)

    def diff(x):  # speed increments, first one from q_I
        out = np.empty_like(x)
        out[0] = x[0] - q_init
        out[1:] = x[1:] - x[:-1]
        return out

    def clip_rows(d, rad):
        nrm = np.sqrt(np.sum(d * d, axis=-1))
        s = np.where(nrm > rad, rad / np.where(nrm > 0, nrm, 1.0), 1.0)
        return d * s[..., None]

    def proj_avg(p):  # Euclidean projection onto each sensor's ellipsoid
        d = p - w
        mu = _ellipsoid_multipliers(np.sum(d * d, axis=-1), wt, avg_cap)
        return w + d / (1.0 + mu[:, None] * wt)[..., None]

    def speed_sweep(v):
        """One pass of exact projections onto the first speed ball and each pairwise speed set."""
        v = v.copy()
        v[0] = q_init + clip_rows(v[0] - q_init, r)
        for j in range(1, n):
            d = v[j] - v[j - 1]
            nrm = math.hypot(d[0], d[1])
            if nrm > r:
                mid = 0.5 * (v[j] + v[j - 1])
                half = 0.5 * r * d / nrm
                v[j - 1], v[j] = mid - half, mid + half
        return v

    avg_scale = c * n * ref_gain * np.asarray(avg_powers, float)

    def violation(x):
        """Largest constraint excess, relative to each constraint's own scale."""
        out = float(np.max(np.sqrt(np.sum(diff(x) ** 2, axis=-1)) / r - 1.0))
        d2 = np.sum((x[None] - w) ** 2, axis=-1)
        if peak_constraints:
            fin = np.isfinite(peak_r2)
            if fin.any():
                out = max(out, float(np.max((d2[fin] - peak_r2[fin]) / (h2 + peak_r2[fin]))))
        if avg_constraints:
            out = max(out, float(np.max((np.sum(wt * d2, axis=1) - avg_cap) / avg_scale)))
        return out

    def feasible(x, rtol=1e-9):
        return violation(x) <= rtol

    # Projection onto the feasible set through the Lagrangian dual with every
    # constraint written as a scaled quadratic (speed limits squared). For fixed
    # multipliers the minimiser solves a tridiagonal system, and the dual
    # gradient is the vector of constraint values there.
    fin = np.isfinite(peak_r2) if peak_constraints else np.zeros((k, n), dtype=bool)
    n_pk = int(fin.sum())
    n_av = k if avg_constraints else 0
    pk_scale = h2 + peak_r2[fin]
    n_var = n_pk + n_av + n

    def hessian_band(lam):
        mu = np.zeros((k, n))
        mu[fin] = lam[:n_pk] / pk_scale
        nu = lam[n_pk:n_pk + n_av] / avg_scale if avg_constraints else np.zeros(k)
        sp = lam[n_pk + n_av:] / (r * r)
        coef = mu + nu[:, None] * wt
        band = np.zeros((2, n))
        band[1] = metric + coef.sum(axis=0) + sp + np.append(sp[1:], 0.0)
        band[0, 1:] = -sp[1:]
        return band, coef, sp

    def minimiser(y, lam):
        band, coef, sp = hessian_band(lam)
        rhs = metric[:, None] * y + np.einsum("kn,kni->ni", coef, w)
        rhs[0] += sp[0] * q_init
        return solveh_banded(band, rhs)

    def constraint_values(x):
        d2 = np.sum((x[None] - w) ** 2, axis=-1)
        parts = [0.5 * (d2[fin] - peak_r2[fin]) / pk_scale]
        if avg_constraints:
            parts.append(0.5 * (np.sum(wt * d2, axis=1) - avg_cap) / avg_scale)
        parts.append(0.5 * (np.sum(diff(x) ** 2, axis=-1) / (r * r) - 1.0))
        return np.concatenate(parts)

    def constraint_jacobian(x):
        """Rows are gradients of the scaled constraints, each of shape (n, 2)."""
        rows = []
        kk, nn = np.nonzero(fin)
        jp = np.zeros((n_pk, n, 2))
        jp[np.arange(n_pk), nn] = (x[nn] - w[kk, nn]) / pk_scale[:, None]
        rows.append(jp)
        if avg_constraints:
            rows.append(wt[..., None] * (x[None] - w) / avg_scale[:, None, None])
        js = np.zeros((n, n, 2))
        d = diff(x) / (r * r)
        js[np.arange(n), np.arange(n)] = d
        js[np.arange(1, n), np.arange(n - 1)] = -d[1:]
        rows.append(js)
        return np.concatenate(rows)

    def kkt_residual(lam, cons):
        return float(np.max(np.where(lam > 0, np.abs(cons), np.maximum(cons, 0.0))))

    def polish(y, lam, iters=30):
        """Newton steps on the dual restricted to the active set."""
        x = minimiser(y, lam)
        cons = constraint_values(x)
        res = kkt_residual(lam, cons)
        for _ in range(iters):
            if res <= 1e-15:
                break
            active = (lam > 0) | (cons > 0)
            jac = constraint_jacobian(x)[active]
            band, _, _ = hessian_band(lam)
            m = jac.shape[0]
            hj = solveh_banded(band, jac.transpose(1, 0, 2).reshape(n, 2 * m))
            hj = hj.reshape(n, m, 2).transpose(1, 0, 2)
            schur = np.einsum("ani,bni->ab", jac, hj)
            dlam = np.linalg.lstsq(schur, cons[active], rcond=1e-13)[0]
            t = 1.0
            while t > 1e-6:
                trial = lam.copy()
                trial[active] = np.maximum(lam[active] + t * dlam, 0.0)
                x_t = minimiser(y, trial)
                cons_t = constraint_values(x_t)
                res_t = kkt_residual(trial, cons_t)
                if res_t < res:
                    break
                t *= 0.5
            else:
                break
            lam, x, cons, res = trial, x_t, cons_t, res_t
        return x

    def dual_projection(y):
        """argmin_x 1/2 ||x - y||^2_M over the feasible set."""
        def neg_dual(lam):
            x = minimiser(y, lam)
            cons = constraint_values(x)
            val = 0.5 * float(np.sum(metric[:, None] * (x - y) ** 2)) + float(lam @ cons)
            return -val, -cons

        res = minimize(neg_dual, np.zeros(n_var), jac=True, method="L-BFGS-B",
                       bounds=[(0.0, None)] * n_var,
                       options={"maxiter": max_iter, "maxfun": 2 * max_iter, "ftol": 1e-16,
                                "gtol": 1e-14, "maxcor": 50})
        x = polish(y, res.x)
        projectors = [speed_sweep]
        if peak_constraints:
            projectors += [lambda v, kk=kk: w[kk] + clip_rows(v - w[kk], radius[kk]) for kk in range(k)]
        if avg_constraints:
            projectors += [lambda v, kk=kk: proj_avg(np.broadcast_to(v, w.shape))[kk] for kk in range(k)]
        return cyclic_projections(x, projectors, feasible)

    cache = {}

    def project(y):
        key = y.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = dual_projection(y)
        return cache[key]

    x0 = np.asarray(start, dtype=float)[1:]
    if not feasible(x0):
        x0 = project(x0)
    res = projected_gradient_qcqp(fun, grad, project, x0, metric=np.repeat(metric[:, None], 2, axis=1),
                                  tol=1e-8, max_iter=50, feasible=feasible)
    q = np.vstack([q_init, res.x])
    return q, res.fun / c


# -- single-sensor grid search ----------------------------------------------------------

def single_sensor_power_mse(gain2: np.ndarray, noise_power: float, peak: float, avg: float) -> np.ndarray:
    """Optimal time-averaged MSE of one sensor over fixed gains, vectorised over leading axes.

    For K = 1 the per-slot optimum over eta is sigma^2 / (sigma^2 + p g), so the
    power allocation solves min sum_n sigma^2/(sigma^2 + p_n g_n) with
    0 <= p <= P, sum p <= N Pbar; the stationarity condition
    sigma^2 g / (sigma^2 + p g)^2 = mu is solved for mu by bisection in log space.
    """
    g = np.asarray(gain2, dtype=float)
    n = g.shape[-1]
    s2 = noise_power

    def alloc(mu):
        p = (np.sqrt(s2 * g / mu[..., None]) - s2) / g
        return np.clip(p, 0.0, peak)

    budget = n * avg
    lo = np.full(g.shape[:-1], -400.0)  # log mu
    hi = np.full(g.shape[:-1], 400.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        over = alloc(np.exp(mid)).sum(axis=-1) > budget
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    p = alloc(np.exp(hi))
    return np.mean(s2 / (s2 + p * g), axis=-1)


def grid_search_mse_single_sensor(trace: np.ndarray, altitude: float, ref_gain: float,
                                  noise_power: float, peak: float, avg: float,
                                  resolution: float, region=((0.0, 400.0), (0.0, 400.0))):
    """Best fixed hover point for one sensor by exhaustive grid evaluation.

    Returns ``(point, mse)`` where ``mse`` is the time-averaged MSE with
    optimal eta and power when the UAV hovers at ``point`` in every slot.
    """
    trace = np.asarray(trace, dtype=float)
    (x0, x1), (y0, y1) = region
    xs = np.arange(x0, x1 + 0.5 * resolution, resolution)
    ys = np.arange(y0, y1 + 0.5 * resolution, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    d2 = np.sum((pts[:, None, :] - trace[None]) ** 2, axis=-1)
    gain2 = ref_gain / (altitude ** 2 + d2)
    mse = single_sensor_power_mse(gain2, noise_power, peak, avg)
    best = int(np.argmin(mse))
    return pts[best], float(mse[best])

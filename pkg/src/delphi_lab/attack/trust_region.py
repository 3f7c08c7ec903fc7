"""Bounded least squares by a trust-region reflective method.

The iterate is kept strictly inside the box ``[lower, upper]``. Each step
solves the quadratic model in Coleman-Li scaled variables, where the
trust region is ``||D s|| <= radius`` and ``D`` shrinks the components
that point at a nearby bound. The model curvature is the Gauss-Newton
matrix ``J^T J`` plus the diagonal correction ``diag(g * dv)`` that the
scaling introduces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .. import nn
from ..nn import Batch, ModelParams
from .config import AttackConfig
from .objective import per_sample_kl

log = logging.getLogger(__name__)

GTOL = 1e-8
MIN_RADIUS = 1e-12


def coleman_li_scaling(theta, g, lower, upper):
    """Distances ``v`` to the bound each gradient component points at, and dv/dtheta."""
    v = np.ones_like(theta)
    dv = np.zeros_like(theta)
    up = (g < 0) & np.isfinite(upper)
    v[up] = upper[up] - theta[up]
    dv[up] = -1.0
    lo = (g > 0) & np.isfinite(lower)
    v[lo] = theta[lo] - lower[lo]
    dv[lo] = 1.0
    return v, dv


def _trust_region_small(g, M, radius):
    """Exact minimiser of g.z + z.M.z/2 over ||z|| <= radius (dense, small)."""
    lam, V = np.linalg.eigh(M)
    gv = V.T @ g
    if lam[0] > 0:
        z = -gv / lam
        if np.linalg.norm(z) <= radius:
            return V @ z

    def excess(shift):
        return np.linalg.norm(gv / (lam + shift)) - radius

    lo = max(0.0, -lam[0])
    lo_eps = lo + 1e-14 * max(1.0, abs(lo))
    with np.errstate(divide="ignore", invalid="ignore"):
        at_lo = excess(lo_eps)
    if not np.isfinite(at_lo) or at_lo > 0:
        hi = lo + np.linalg.norm(g) / radius + 1.0
        while excess(hi) > 0:
            hi *= 2.0
        shift = brentq(excess, lo_eps, hi, xtol=1e-14, rtol=1e-12)
        return -V @ (gv / (lam + shift))
    # hard case: fill the remaining length along the lowest-curvature direction
    z = np.zeros_like(gv)
    free = np.abs(lam + lo) > 1e-14
    z[free] = -gv[free] / (lam[free] + lo)
    tail = np.sqrt(max(radius**2 - z @ z, 0.0))
    z[0] += tail
    return V @ z


def _subspace_step(g_h, M_h, radius):
    """Minimise the scaled model over span{gradient, Newton direction}."""
    dirs = [g_h]
    try:
        newton = np.linalg.solve(M_h, -g_h)
        if np.all(np.isfinite(newton)) and newton @ M_h @ newton > 0:
            dirs.append(newton)
    except np.linalg.LinAlgError:
        pass
    Q, R = np.linalg.qr(np.column_stack(dirs))
    keep = np.abs(np.diag(R)) > 1e-12 * np.abs(R[0, 0])
    Q = Q[:, keep]
    z = _trust_region_small(Q.T @ g_h, Q.T @ M_h @ Q, radius)
    return Q @ z


def _step_to_bound(x, p, lower, upper):
    """Largest t with x + t p inside the box, and which components hit first."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, (upper - x) / p, np.where(p < 0, (lower - x) / p, np.inf))
    t_min = float(np.min(t)) if t.size else np.inf
    return t_min, np.isclose(t, t_min) & np.isfinite(t)


def _line_min(a, b, t_lo, t_hi):
    """Minimiser of a t^2 + b t on [t_lo, t_hi]."""
    cands = [t_lo, t_hi]
    if a > 0:
        cands.append(np.clip(-b / (2 * a), t_lo, t_hi))
    vals = [a * t * t + b * t for t in cands]
    return cands[int(np.argmin(vals))]


def _tr_limit(p0, r, radius):
    """Largest t >= 0 with ||p0 + t r|| <= radius."""
    a = r @ r
    b = 2 * p0 @ r
    c = p0 @ p0 - radius**2
    if a == 0:
        return np.inf
    disc = max(b * b - 4 * a * c, 0.0)
    return (-b + np.sqrt(disc)) / (2 * a)


@dataclass
class SubproblemSolution:
    step: np.ndarray
    psi: float
    correction: float


def solve_subproblem(g, B, radius, lower, upper, theta) -> SubproblemSolution:
    """Scaled, reflected trust-region step; ``psi`` is the model value at the step."""
    g = np.asarray(g, dtype=float)
    theta = np.asarray(theta, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), theta.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), theta.shape)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not np.any(g):
        return SubproblemSolution(np.zeros_like(theta), 0.0, 0.0)
    v, dv = coleman_li_scaling(theta, g, lower, upper)
    d = np.sqrt(v)
    g_h = d * g
    C_h = g * dv
    M_h = B * np.outer(d, d) + np.diag(C_h)

    def psi(p_h):
        return float(g_h @ p_h + 0.5 * p_h @ M_h @ p_h)

    theta_frac = max(0.995, 1.0 - np.linalg.norm(g_h))
    candidates = []

    p_h = _subspace_step(g_h, M_h, radius)
    p = d * p_h
    t_bound, hits = _step_to_bound(theta, p, lower, upper)
    if t_bound > 1:
        candidates.append(p_h)
    else:
        candidates.append(theta_frac * t_bound * p_h)
        # reflect off the first bound hit and search along the new direction
        r_h = p_h.copy()
        r_h[hits] *= -1
        p0_h = t_bound * p_h
        on_bound = theta + d * p0_h
        t_r_bound, _ = _step_to_bound(on_bound, d * r_h, lower, upper)
        t_hi = min(_tr_limit(p0_h, r_h, radius), t_r_bound)
        if np.isfinite(t_hi) and t_hi > 0:
            t_lo = (1 - theta_frac) * t_hi
            t_hi = theta_frac * t_hi
            a = 0.5 * r_h @ M_h @ r_h
            b = g_h @ r_h + p0_h @ M_h @ r_h
            t = _line_min(a, b, t_lo, t_hi)
            candidates.append(p0_h + t * r_h)

    # Cauchy point along the scaled steepest descent, kept inside the box
    c_h = -g_h
    t_c = min(radius / np.linalg.norm(c_h), theta_frac * _step_to_bound(theta, d * c_h, lower, upper)[0])
    t = _line_min(0.5 * c_h @ M_h @ c_h, g_h @ c_h, 0.0, t_c)
    candidates.append(t * c_h)

    vals = [psi(c) for c in candidates]
    best = candidates[int(np.argmin(vals))]
    correction = 0.5 * float(best @ (C_h * best))
    return SubproblemSolution(d * best, min(vals), correction)


def lstr_subproblem(g, B, radius, lower, upper, theta) -> np.ndarray:
    return solve_subproblem(g, B, radius, lower, upper, theta).step


def lstr_ratio(f_old: float, f_new: float, psi: float, correction: float = 0.0) -> float:
    """Agreement between the realised change and the model's prediction."""
    actual = f_new - f_old
    if psi == 0:
        return 1.0 if abs(actual) <= 1e-15 * max(1.0, abs(f_old)) else 0.0
    return (actual + correction) / psi


def lstr_update_radius(beta: float, radius: float, mu=0.25, eta=0.75, gamma1=0.25,
                       gamma2=2.0, radius_max=100.0) -> float:
    if beta <= mu:
        return gamma1 * radius
    if beta < eta:
        return radius
    return min(gamma2 * radius, radius_max)


def fd_jacobian(fun, theta, r0, lower, upper):
    """Forward differences with step 1e-6 (1 + |theta|), flipped at the upper bound."""
    J = np.empty((len(r0), len(theta)))
    for j in range(len(theta)):
        h = 1e-6 * (1.0 + abs(theta[j]))
        if theta[j] + h > upper[j]:
            h = -h
        x = theta.copy()
        x[j] += h
        J[:, j] = (fun(x) - r0) / h
    return J


@dataclass
class TrustRegionState:
    theta: np.ndarray
    radius: float
    lower: np.ndarray
    upper: np.ndarray
    grad: np.ndarray
    hessian: np.ndarray
    beta: float = 0.0
    iteration: int = 0
    cost: float = 0.0
    history: list[float] = field(default_factory=list)
    accepted: int = 0
    status: str = "running"


def least_squares_trf(fun, theta0, lower, upper, jac=None, radius0=1.0, radius_max=100.0,
                      mu=0.25, eta=0.75, gamma1=0.25, gamma2=2.0,
                      max_iters=100) -> TrustRegionState:
    """Minimise ``0.5 * ||fun(theta)||^2`` subject to ``lower <= theta <= upper``.

    ``history`` holds the cost after every accepted step (starting with the
    initial cost), so it is non-increasing by construction.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    theta = np.clip(np.asarray(theta0, dtype=float), lower, upper)
    # the scaling needs a strictly interior start
    gap = 1e-10 * np.maximum(1.0, np.abs(theta))
    theta = np.where(theta <= lower, np.minimum(lower + gap, (lower + upper) / 2), theta)
    theta = np.where(theta >= upper, np.maximum(upper - gap, (lower + upper) / 2), theta)

    def jacobian(x, r):
        if jac is not None:
            return np.atleast_2d(jac(x))
        return fd_jacobian(fun, x, r, lower, upper)

    r = np.asarray(fun(theta), dtype=float)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise FloatingPointError("objective is not finite at the starting point")
    J = jacobian(theta, r)
    state = TrustRegionState(theta, radius0, lower, upper, J.T @ r, J.T @ J,
                             cost=cost, history=[cost])
    while state.iteration < max_iters:
        v, _ = coleman_li_scaling(state.theta, state.grad, lower, upper)
        if np.linalg.norm(v * state.grad, np.inf) <= GTOL:
            state.status = "first-order"
            break
        if state.radius <= MIN_RADIUS:
            state.status = "radius"
            break
        state.iteration += 1
        sol = solve_subproblem(state.grad, state.hessian, state.radius, lower, upper, state.theta)
        if sol.psi >= 0:
            state.radius *= gamma1
            continue
        trial = state.theta + sol.step
        r_new = np.asarray(fun(trial), dtype=float)
        cost_new = 0.5 * float(r_new @ r_new)
        if not np.isfinite(cost_new):
            log.warning("non-finite objective at iteration %d; keeping best so far", state.iteration)
            state.status = "non-finite"
            break
        state.beta = lstr_ratio(state.cost, cost_new, sol.psi, sol.correction)
        state.radius = lstr_update_radius(state.beta, state.radius, mu, eta, gamma1, gamma2,
                                          radius_max)
        if cost_new < state.cost:
            state.theta, state.cost = trial, cost_new
            J = jacobian(trial, r_new)
            state.grad, state.hessian = J.T @ r_new, J.T @ J
            state.history.append(cost_new)
            state.accepted += 1
    else:
        state.status = "max-iters"
    return state


def delphi_lstr_search(model: ModelParams, batch: Batch, cfg: AttackConfig,
                       selected_neurons) -> tuple[ModelParams, TrustRegionState]:
    idx = list(selected_neurons)
    theta0 = nn.get_first_layer_neurons(model, idx)
    lower, upper = theta0 - cfg.bound_halfwidth, theta0 + cfg.bound_halfwidth

    def residuals(theta):
        return per_sample_kl(nn.set_first_layer_neurons(model, idx, theta), batch)

    state = least_squares_trf(
        residuals, theta0, lower, upper, radius0=cfg.lstr_radius0,
        radius_max=cfg.lstr_radius_max, mu=cfg.lstr_mu, eta=cfg.lstr_eta,
        gamma1=cfg.lstr_gamma1, gamma2=cfg.lstr_gamma2, max_iters=cfg.lstr_max_iters,
    )
    theta = state.theta if state.accepted else theta0
    return nn.set_first_layer_neurons(model, idx, theta), state


def delphi_lstr(model: ModelParams, batch: Batch, cfg: AttackConfig,
                selected_neurons) -> ModelParams:
    """Poison ``selected_neurons`` by least squares on the per-sample KL values."""
    return delphi_lstr_search(model, batch, cfg, selected_neurons)[0]

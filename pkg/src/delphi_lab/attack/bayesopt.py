"""Bayesian-optimisation search over first-layer neuron parameters."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .. import nn
from ..nn import Batch, ModelParams
from .config import AttackConfig
from .gp import SurrogateError, gp_fit, gp_posterior, qei
from .objective import kl_objective

log = logging.getLogger(__name__)


@dataclass
class BOResult:
    x_best: np.ndarray
    f_best: float
    X: np.ndarray
    y: np.ndarray
    n_init: int
    # predicted-minus-observed value for every acquired point
    residuals: list[float] = field(default_factory=list)


def initial_design(x0, lower, upper, n_points, rng) -> np.ndarray:
    """``x0`` followed by ``n_points - 1`` scrambled Halton points in the box."""
    x0 = np.asarray(x0, dtype=float)
    if n_points <= 1:
        return x0[None, :]
    halton = qmc.Halton(d=len(x0), scramble=True, seed=rng)
    pts = qmc.scale(halton.random(n_points - 1), lower, upper)
    return np.vstack([x0, pts])


def candidate_pool(rng, incumbent, size, q, local_fraction, local_scale):
    """Uniform unit-cube points mixed with sparse perturbations of the incumbent."""
    p = len(incumbent)
    n = size * q
    n_local = int(round(local_fraction * n))
    pts = rng.uniform(size=(n, p))
    if n_local:
        # perturb a random subset of coordinates (about 20 of them) per candidate
        mask = rng.uniform(size=(n_local, p)) < min(1.0, 20.0 / p)
        mask[np.arange(n_local), rng.integers(p, size=n_local)] = True
        step = rng.normal(scale=local_scale, size=(n_local, p)) * mask
        pts[:n_local] = np.clip(incumbent + step, 0.0, 1.0)
    return pts if q == 1 else pts.reshape(size, q, p)


def maximize(objective, lower, upper, x0, n_iter=30, n_init=5, pool=256, q=1,
             mc_samples=256, length_scale=1.0, local_fraction=0.0, local_scale=0.1,
             rng=None) -> BOResult:
    """Maximise a black-box ``objective`` over the box ``[lower, upper]``.

    The GP sees inputs rescaled to the unit cube. Each iteration refits the
    surrogate on every observation so far, scores ``pool`` uniform candidates
    with Monte-Carlo qEI and evaluates the winner.
    """
    rng = np.random.default_rng(rng)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    span = upper - lower
    p = len(lower)

    def evaluate(x):
        v = float(objective(x))
        return v if np.isfinite(v) else -np.inf

    X = initial_design(x0, lower, upper, n_init, rng)
    y = np.array([evaluate(x) for x in X])
    result = BOResult(X[0], y[0], X, y, len(X))

    for _ in range(n_iter):
        finite = np.isfinite(y)
        if not finite.any():
            break
        y_fit = np.where(finite, y, y[finite].min())
        try:
            surrogate = gp_fit((X - lower) / span, y_fit, rho=length_scale)
        except SurrogateError:
            log.warning("surrogate fit failed after %d points; keeping best so far", len(y))
            break
        incumbent = (X[int(np.argmax(y_fit))] - lower) / span
        cand = candidate_pool(rng, incumbent, pool, q, local_fraction, local_scale)
        scores = qei(surrogate, cand, float(y_fit.max()), q=q, n_samples=mc_samples,
                     seed=rng.integers(2**63))
        chosen = np.atleast_2d(cand[int(np.argmax(scores))])
        predicted = np.atleast_1d(gp_posterior(surrogate, chosen)[0])
        new_x = lower + chosen * span
        new_y = np.array([evaluate(x) for x in new_x])
        result.residuals.extend((predicted - new_y).tolist())
        X = np.vstack([X, new_x])
        y = np.concatenate([y, new_y])

    best = int(np.argmax(y))
    result.x_best, result.f_best, result.X, result.y = X[best], float(y[best]), X, y
    return result


def search_box(theta0, halfwidth):
    return theta0 - halfwidth, theta0 + halfwidth


def delphi_bo_search(model: ModelParams, batch: Batch, cfg: AttackConfig,
                     selected_neurons, rng=None) -> tuple[ModelParams, BOResult]:
    """Run the BO attack and also return the search trace."""
    idx = list(selected_neurons)
    theta0 = nn.get_first_layer_neurons(model, idx)
    lower, upper = search_box(theta0, cfg.bound_halfwidth)

    def neg_kl(theta):
        return -kl_objective(nn.set_first_layer_neurons(model, idx, theta), batch)

    res = maximize(neg_kl, lower, upper, theta0, n_iter=cfg.bo_iterations,
                   n_init=cfg.bo_init_points, pool=cfg.candidate_pool, q=cfg.q,
                   mc_samples=cfg.mc_samples, length_scale=cfg.length_scale,
                   local_fraction=cfg.local_fraction, local_scale=cfg.local_scale, rng=rng)
    return nn.set_first_layer_neurons(model, idx, res.x_best), res


def delphi_bo(model: ModelParams, batch: Batch, cfg: AttackConfig, selected_neurons,
              rng=None) -> ModelParams:
    """Poison ``selected_neurons`` so the model's outputs drift towards the target."""
    return delphi_bo_search(model, batch, cfg, selected_neurons, rng)[0]

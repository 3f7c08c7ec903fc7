"""Gaussian-process surrogate with a Matern-5/2 kernel and Monte-Carlo qEI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

SQRT5 = np.sqrt(5.0)
JITTER_LADDER = (1e-6, 1e-4, 1e-2)


class SurrogateError(ArithmeticError):
    """Kernel matrix stayed indefinite after jitter escalation."""


def matern52_from_distance(d, rho: float = 1.0, sigma2: float = 1.0):
    r = SQRT5 * np.asarray(d, dtype=float) / rho
    return sigma2 * (1.0 + r + r**2 / 3.0) * np.exp(-r)


def matern52(a, b, rho: float = 1.0, sigma2: float = 1.0) -> float:
    """Matern kernel with nu = 5/2 between two points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(matern52_from_distance(np.linalg.norm(a - b), rho, sigma2))


def kernel_matrix(X, Y, rho=1.0, sigma2=1.0) -> np.ndarray:
    return matern52_from_distance(cdist(np.atleast_2d(X), np.atleast_2d(Y)), rho, sigma2)


@dataclass
class Surrogate:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    rho: float
    sigma2: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def n(self):
        return len(self.y)


def gp_fit(X, y, rho: float = 1.0, sigma2: float | None = None,
           jitter: float = 1e-10) -> Surrogate:
    """Condition a constant-mean GP on noise-free observations.

    ``sigma2`` defaults to the empirical variance of the centred targets
    (floored at 1e-4). When the Cholesky factorisation fails the jitter is
    raised through 1e-6, 1e-4, 1e-2 before giving up.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 1 or len(X) != len(y):
        raise ValueError("need matching, non-empty X and y")
    y_mean = float(np.mean(y))
    centred = y - y_mean
    if sigma2 is None:
        sigma2 = max(float(np.mean(centred**2)), 1e-4)
    K = kernel_matrix(X, X, rho, sigma2)
    ladder = [jitter] + [j for j in JITTER_LADDER if j > jitter]
    for jit in ladder:
        try:
            L = cholesky(K + jit * np.eye(len(y)), lower=True)
        except np.linalg.LinAlgError:
            continue
        alpha = cho_solve((L, True), centred)
        return Surrogate(X, y, y_mean, rho, sigma2, jit, L, alpha)
    raise SurrogateError(f"kernel matrix not positive definite (n={len(y)})")


def gp_posterior(s: Surrogate, x) -> tuple[np.ndarray, np.ndarray] | tuple[float, float]:
    """Posterior mean and variance at one point or at each row of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = np.atleast_2d(x)
    if Xq.shape[1] != s.X.shape[1]:
        raise ValueError(f"query has {Xq.shape[1]} dims, surrogate {s.X.shape[1]}")
    Ks = kernel_matrix(Xq, s.X, s.rho, s.sigma2)
    mean = s.y_mean + Ks @ s.alpha
    v = solve_triangular(s.chol, Ks.T, lower=True)
    var = np.clip(s.sigma2 - np.sum(v**2, axis=0), 0.0, s.sigma2 + s.jitter)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def gp_joint_posterior(s: Surrogate, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean vector and covariance matrix over a set of points."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = kernel_matrix(Xq, s.X, s.rho, s.sigma2)
    v = solve_triangular(s.chol, Ks.T, lower=True)
    cov = kernel_matrix(Xq, Xq, s.rho, s.sigma2) - v.T @ v
    return s.y_mean + Ks @ s.alpha, 0.5 * (cov + cov.T)


def qei(s: Surrogate, candidates, f_star: float, q: int = 1, n_samples: int = 512,
        seed=None) -> np.ndarray:
    """Monte-Carlo expected improvement of each candidate (or candidate set).

    ``candidates`` is (m, p) for q = 1 or (m, q, p) for joint batches. The
    same standard-normal draws are shared across candidates so that scores
    are comparable.
    """
    if n_samples < 1:
        raise ValueError("need at least one Monte-Carlo sample")
    rng = np.random.default_rng(seed)
    cand = np.asarray(candidates, dtype=float)
    if q == 1 and cand.ndim == 2:
        mean, var = gp_posterior(s, cand)
        z = rng.standard_normal(n_samples)
        xi = mean[:, None] + np.sqrt(var)[:, None] * z[None, :]
        return np.mean(np.maximum(xi - f_star, 0.0), axis=1)
    if cand.ndim != 3 or cand.shape[1] != q:
        raise ValueError(f"expected candidates of shape (m, {q}, p), got {cand.shape}")
    z = rng.standard_normal((n_samples, q))
    scores = np.empty(len(cand))
    for i, group in enumerate(cand):
        mean, cov = gp_joint_posterior(s, group)
        w, V = np.linalg.eigh(cov)
        root = V * np.sqrt(np.clip(w, 0.0, None))
        xi = mean[None, :] + z @ root.T
        scores[i] = np.mean(np.max(np.maximum(xi - f_star, 0.0), axis=1))
    return scores

"""Uncertainty metrics and the attack-effectiveness bound."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import nn
from .nn import ModelParams

CSV_COLUMNS = (
    "round", "accuracy", "mean_confidence", "mean_entropy", "rho", "rho_bound",
    "epsilon_measured", "delta_w_mean", "delta_w_max",
)


class DomainError(ValueError):
    pass


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    mean_confidence: float
    mean_entropy: float
    rho: float = 0.0
    rho_bound: float = 0.0
    epsilon_measured: float = 0.0
    per_attacker_delta_w: list[float] = field(default_factory=list)

    def as_row(self) -> dict:
        deltas = self.per_attacker_delta_w
        row = {k: v for k, v in asdict(self).items() if k != "per_attacker_delta_w"}
        row["delta_w_mean"] = float(np.mean(deltas)) if deltas else 0.0
        row["delta_w_max"] = float(np.max(deltas)) if deltas else 0.0
        return {k: row[k] for k in CSV_COLUMNS}


def _inputs(testset):
    return testset.inputs if hasattr(testset, "inputs") else testset


def mean_predictive_confidence(model: ModelParams, testset) -> float:
    """Average of the top softmax probability over the test inputs."""
    probs = nn.predict_proba(model, _inputs(testset))
    return float(np.mean(probs.max(axis=1)))


def accuracy(model: ModelParams, testset) -> float:
    # argmax returns the first maximum, i.e. the lowest class index on ties
    pred = np.argmax(nn.forward(model, _inputs(testset)), axis=1)
    return float(np.mean(pred == testset.labels))


def mean_entropy(model: ModelParams, testset) -> float:
    return float(np.mean(nn.predictive_entropy(nn.predict_proba(model, _inputs(testset)))))


def _vec(w):
    return w.flatten() if isinstance(w, ModelParams) else np.asarray(w, dtype=float).ravel()


def attack_effectiveness(global_w, malicious_ws, c: float) -> float:
    """Mean squared L2 distance of the malicious uploads from the global model, over c."""
    if c <= 0:
        raise DomainError(f"mean confidence must be positive, got {c}")
    if len(malicious_ws) < 1:
        raise DomainError("need at least one malicious model")
    g = _vec(global_w)
    sq = [float(np.sum((g - _vec(w)) ** 2)) for w in malicious_ws]
    return float(np.mean(sq)) / c


def effectiveness_bound(c: float, epsilon: float, n_benign: int, n_attackers: int) -> float:
    """Upper bound (eps^2 / c) (3N/A + 4) on the attack effectiveness.

    Evaluated in exact rational arithmetic and rounded once, so the result is
    the float nearest the true value (plain float evaluation can be one ulp off).
    """
    if c <= 0:
        raise DomainError(f"mean confidence must be positive, got {c}")
    if n_attackers < 1:
        raise DomainError("the bound needs at least one attacker")
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    eps = Fraction(float(epsilon))
    return float(eps * eps * (3 * Fraction(n_benign, n_attackers) + 4) / Fraction(float(c)))


def measured_epsilon(per_attacker_deltas, n_benign: int, n_attackers: int) -> float:
    """Summed L2 norm of the attackers' perturbations, spread over all N + A clients."""
    if n_attackers < 1:
        raise DomainError("need at least one attacker")
    norms = [float(np.linalg.norm(_vec(d))) for d in per_attacker_deltas]
    return sum(norms) / (n_benign + n_attackers)


@dataclass
class BoundReport:
    trials: int
    passed: int
    max_ratio: float
    violations: list[dict] = field(default_factory=list)

    @property
    def all_passed(self):
        return self.passed == self.trials


def _premise_trial(rng, dim):
    """One synthetic configuration obeying the bound's premises.

    Every attacker perturbs the common benign model by a vector of the same
    length, and that length is the expected perturbation epsilon.
    """
    n_benign = int(rng.integers(0, 10))
    n_att = int(rng.integers(1, 6))
    eps = float(rng.uniform(0.0, 2.0))
    w_benign = rng.normal(size=dim)
    dirs = rng.normal(size=(n_att, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    malicious = w_benign + eps * dirs
    # the global model mixes N benign copies with the malicious uploads
    w_global = (n_benign * w_benign + malicious.sum(axis=0)) / (n_benign + n_att)
    return n_benign, n_att, eps, w_global, malicious


def bound_lhs(w_global, malicious) -> float:
    return float(np.mean([np.sum((w_global - m) ** 2) for m in malicious]))


def verify_bound_derivation(n_trials: int, seed: int, dim: int = 8) -> BoundReport:
    """Check mean ||w - w_a||^2 <= eps^2 (3N/A + 4) on premise-conforming draws."""
    if n_trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    passed, max_ratio, bad = 0, 0.0, []
    for _ in range(n_trials):
        n, a, eps, w, mal = _premise_trial(rng, dim)
        lhs = bound_lhs(w, mal)
        rhs = eps**2 * (3 * n / a + 4)
        ok = lhs <= rhs * (1 + 1e-12) + 1e-15
        passed += ok
        if rhs > 0:
            max_ratio = max(max_ratio, lhs / rhs)
        if not ok:
            bad.append({"N": n, "A": a, "epsilon": eps, "lhs": lhs, "rhs": rhs})
    return BoundReport(n_trials, passed, max_ratio, bad)


def search_bound_counterexamples(n_trials: int, seed: int, dim: int = 8,
                                 spread: float = 10.0) -> BoundReport:
    """Same check with heterogeneous perturbation sizes, epsilon taken as the smallest.

    This leaves the premise on purpose; the report shows where the inequality
    no longer holds.
    """
    rng = np.random.default_rng(seed)
    passed, max_ratio, bad = 0, 0.0, []
    for _ in range(n_trials):
        n = int(rng.integers(0, 10))
        a = int(rng.integers(2, 6))
        sizes = rng.uniform(0.01, 1.0, size=a)
        sizes[0] *= spread
        w_benign = rng.normal(size=dim)
        dirs = rng.normal(size=(a, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        mal = w_benign + sizes[:, None] * dirs
        w = (n * w_benign + mal.sum(axis=0)) / (n + a)
        eps = float(sizes.min())
        lhs = bound_lhs(w, mal)
        rhs = eps**2 * (3 * n / a + 4)
        ok = lhs <= rhs
        passed += ok
        max_ratio = max(max_ratio, lhs / rhs)
        if not ok:
            bad.append({"N": n, "A": a, "epsilon": eps, "lhs": lhs, "rhs": rhs})
    return BoundReport(n_trials, passed, max_ratio, bad)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delphi_lab import metrics, nn
from delphi_lab.attack import build_target
from delphi_lab.data import Dataset
from delphi_lab.metrics import (
    DomainError, RoundMetrics, attack_effectiveness, effectiveness_bound, measured_epsilon,
    search_bound_counterexamples, verify_bound_derivation,
)
from conftest import random_model


def linear(w, b=None):
    w = np.asarray(w, dtype=float)
    return nn.ModelParams([w], [np.zeros(w.shape[0]) if b is None else np.asarray(b, float)])


def test_confidence_one_hot_uniform_and_target():
    x = np.eye(10)
    assert metrics.mean_predictive_confidence(linear(80 * np.eye(10)), x) == pytest.approx(1.0)
    assert metrics.mean_predictive_confidence(linear(np.zeros((10, 10))), x) == pytest.approx(0.1)
    z = np.log(np.column_stack([build_target(j, 10) for j in range(10)]))
    assert metrics.mean_predictive_confidence(linear(z), x) == pytest.approx(0.25)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_confidence_in_range(seed):
    model = random_model(seed % 1000, dims=(4, 6, 7), scale=3.0)
    x = np.random.default_rng(seed).normal(size=(20, 4))
    c = metrics.mean_predictive_confidence(model, x)
    assert 1 / 7 - 1e-12 <= c <= 1.0


def test_accuracy_cases():
    test = Dataset(np.eye(10), np.arange(10), 10)
    assert metrics.accuracy(linear(5 * np.eye(10)), test) == 1.0
    constant = linear(np.zeros((10, 10)), np.eye(10)[3])
    balanced = Dataset(np.zeros((50, 10)), np.repeat(np.arange(10), 5), 10)
    assert metrics.accuracy(constant, balanced) == pytest.approx(0.1)


def test_accuracy_brute_force():
    model = random_model(1, dims=(4, 6, 3))
    rng = np.random.default_rng(1)
    test = Dataset(rng.normal(size=(30, 4)), rng.integers(3, size=30), 3)
    logits = nn.forward(model, test.inputs)
    hits = sum(int(np.argmax(logits[i]) == test.labels[i]) for i in range(30))
    assert metrics.accuracy(model, test) == hits / 30


def test_entropy_of_uniform_model():
    assert metrics.mean_entropy(linear(np.zeros((10, 3))), np.ones((5, 3))) == pytest.approx(np.log(10))


def test_rho_zero_when_equal():
    m = random_model(0)
    assert attack_effectiveness(m, [m], 0.7) == 0.0


def test_rho_arithmetic():
    assert attack_effectiveness(np.zeros(2), [np.array([np.sqrt(0.2), 0.0])], 0.5) == pytest.approx(0.4)


def test_rho_brute_force():
    rng = np.random.default_rng(2)
    g, a, b = rng.normal(size=(3, 9))
    brute = (np.sum((g - a) ** 2) + np.sum((g - b) ** 2)) / 2 / 0.3
    assert attack_effectiveness(g, [a, b], 0.3) == pytest.approx(brute, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rho_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    g, a, b, shift = rng.normal(size=(4, 6))
    assert attack_effectiveness(g + shift, [a + shift, b + shift], 0.4) == pytest.approx(
        attack_effectiveness(g, [a, b], 0.4), rel=1e-9, abs=1e-12)


def test_rho_domain_errors():
    with pytest.raises(DomainError):
        attack_effectiveness(np.zeros(2), [np.zeros(2)], 0.0)
    with pytest.raises(DomainError):
        attack_effectiveness(np.zeros(2), [], 0.5)


def test_bound_constants():
    assert 3 * 4 / 2 + 4 == 10
    assert effectiveness_bound(1.0, 0.2, 4, 2) == pytest.approx(0.4)
    assert effectiveness_bound(0.25, 0.2, 4, 2) == 1.6
    # eps = 0.125 gives eps^2 = 0.015625, which rounds to the reported 0.015
    assert effectiveness_bound(1.0, 0.125, 4, 2) / 10 == 0.015625


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 20), st.integers(1, 10), st.floats(0.01, 2), st.floats(0.05, 1))
def test_bound_monotone(n, a, eps, c):
    assert effectiveness_bound(c, eps, n + 1, a) > effectiveness_bound(c, eps, n, a)
    if n > 0:
        assert effectiveness_bound(c, eps, n, a + 1) < effectiveness_bound(c, eps, n, a)


def test_bound_domain_errors():
    with pytest.raises(DomainError):
        effectiveness_bound(0.0, 0.1, 4, 2)
    with pytest.raises(DomainError):
        effectiveness_bound(0.5, 0.1, 4, 0)


def test_measured_epsilon_cases():
    assert measured_epsilon([np.zeros(3), np.zeros(3)], 4, 2) == 0.0
    d = np.array([0.6, 0.0, 0.0])
    assert measured_epsilon([d, -d], 4, 2) == pytest.approx(0.2)


def test_measured_epsilon_direct_sum():
    deltas = np.random.default_rng(3).normal(size=(3, 5))
    direct = sum(np.sqrt(np.sum(x * x)) for x in deltas) / 7
    assert measured_epsilon(list(deltas), 4, 3) == pytest.approx(direct, rel=1e-12)


def test_bound_lhs_zero_perturbation():
    w = np.ones(4)
    lhs = metrics.bound_lhs(w, np.stack([w, w]))
    assert lhs == 0.0 <= effectiveness_bound(1.0, 0.0, 4, 2)


def test_single_attacker_no_benign():
    d = np.array([0.3, 0.4])
    w_benign = np.zeros(2)
    malicious = np.stack([w_benign + d])
    lhs = metrics.bound_lhs(malicious.mean(axis=0), malicious)
    assert lhs <= 4 * 0.5**2


def test_bound_holds_on_premise_trials():
    report = verify_bound_derivation(1000, seed=0)
    assert report.all_passed
    assert report.violations == []


def test_counterexample_search_finds_violations():
    report = search_bound_counterexamples(500, seed=0)
    assert report.passed < report.trials
    assert report.max_ratio > 1


def test_round_metrics_row_order():
    row = RoundMetrics(3, 0.9, 0.8, 0.5, per_attacker_delta_w=[1.0, 3.0]).as_row()
    assert tuple(row) == metrics.CSV_COLUMNS
    assert row["delta_w_mean"] == 2.0 and row["delta_w_max"] == 3.0

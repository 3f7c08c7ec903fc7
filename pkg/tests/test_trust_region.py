import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import lsq_linear

from delphi_lab import nn
from delphi_lab.attack import (
    AttackConfig, delphi_lstr, delphi_lstr_search, fd_jacobian, kl_objective,
    least_squares_trf, lstr_ratio, lstr_subproblem, lstr_update_radius, rank_neurons,
    solve_subproblem,
)
from conftest import trained_mlp

INF = np.array([np.inf])


def test_subproblem_zero_gradient():
    np.testing.assert_array_equal(lstr_subproblem([0.0], [[2.0]], 1.0, -INF, INF, [0.0]), [0.0])


def test_subproblem_newton_step():
    s = lstr_subproblem([2.0], [[2.0]], 10.0, -INF, INF, [0.0])
    np.testing.assert_allclose(s, [-1.0], atol=1e-12)


def test_subproblem_on_trust_boundary():
    s = lstr_subproblem([2.0], [[2.0]], 0.1, -INF, INF, [0.0])
    np.testing.assert_allclose(s, [-0.1], atol=1e-12)


def test_subproblem_2d_boundary_matches_eigen_oracle():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(2, 2))
    B = A @ A.T + 0.1 * np.eye(2)
    g = rng.normal(size=2)
    s = lstr_subproblem(g, B, 0.05, -np.full(2, np.inf), np.full(2, np.inf), np.zeros(2))
    assert np.linalg.norm(s) == pytest.approx(0.05, rel=1e-9)
    # oracle: dense grid on the circle of radius 0.05 (the minimiser lies on it)
    t = np.linspace(0, 2 * np.pi, 200_001)
    circle = 0.05 * np.column_stack([np.cos(t), np.sin(t)])
    vals = circle @ g + 0.5 * np.einsum("ij,jk,ik->i", circle, B, circle)
    assert g @ s + 0.5 * s @ B @ s <= vals.min() + 1e-12


def test_subproblem_stays_inside_box():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lo, hi = -rng.uniform(0.1, 1, 4), rng.uniform(0.1, 1, 4)
        theta = rng.uniform(lo, hi)
        A = rng.normal(size=(6, 4))
        s = lstr_subproblem(rng.normal(size=4) * 5, A.T @ A, 10.0, lo, hi, theta)
        assert np.all(theta + s > lo) and np.all(theta + s < hi)


def test_ratio_exact_model():
    assert lstr_ratio(5.0, 3.0, -2.0) == 1.0


def test_ratio_no_change():
    assert lstr_ratio(5.0, 5.0, -1.0) == 0.0


def test_ratio_formula():
    rng = np.random.default_rng(2)
    for _ in range(20):
        f_old, f_new, psi, corr = rng.normal(size=4)
        assert lstr_ratio(f_old, f_new, psi, corr) == pytest.approx((f_new - f_old + corr) / psi)


@pytest.mark.parametrize("beta, expected", [(0.1, 0.25), (0.25, 0.25), (0.5, 1.0), (0.9, 2.0)])
def test_radius_rules(beta, expected):
    assert lstr_update_radius(beta, 1.0, mu=0.25, eta=0.75, gamma1=0.25, gamma2=2.0,
                              radius_max=4.0) == expected


def test_radius_capped():
    assert lstr_update_radius(0.9, 3.0, gamma2=2.0, radius_max=4.0) == 4.0


def test_stub_residual_converges():
    state = least_squares_trf(lambda t: t - 2.0, np.zeros(1), [-10.0], [10.0])
    assert state.theta[0] == pytest.approx(2.0, abs=1e-6)


def test_optimal_start_returns_start():
    state = least_squares_trf(lambda t: t - 2.0, np.full(1, 2.0), [-10.0], [10.0])
    assert state.accepted == 0
    assert state.theta[0] == 2.0


@pytest.mark.parametrize("seed", range(10))
def test_separable_bounded_quadratic(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 3.0, 6)
    b = rng.normal(scale=3.0, size=6)
    lo, hi = -np.ones(6), np.ones(6)
    state = least_squares_trf(lambda t: a * t - b, np.zeros(6), lo, hi, jac=lambda t: np.diag(a))
    np.testing.assert_allclose(state.theta, np.clip(b / a, lo, hi), atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_general_bounded_quadratic_matches_lsq_linear(seed):
    rng = np.random.default_rng(seed)
    A, b = rng.normal(size=(8, 5)), rng.normal(scale=3.0, size=8)
    lo, hi = -0.5 * np.ones(5), 0.5 * np.ones(5)
    state = least_squares_trf(lambda t: A @ t - b, np.zeros(5), lo, hi, jac=lambda t: A)
    ref = lsq_linear(A, b, bounds=(lo, hi), tol=1e-14).x
    np.testing.assert_allclose(state.theta, ref, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_exact_model_gives_unit_ratio(seed):
    rng = np.random.default_rng(seed)
    A, b = rng.normal(size=(8, 5)), rng.normal(size=8)
    lo, hi = -np.ones(5), np.ones(5)
    theta = rng.uniform(-0.9, 0.9, 5)
    r = A @ theta - b
    sol = solve_subproblem(A.T @ r, A.T @ A, 0.3, lo, hi, theta)
    cost = lambda t: 0.5 * np.sum((A @ t - b) ** 2)
    beta = lstr_ratio(cost(theta), cost(theta + sol.step), sol.psi, sol.correction)
    assert beta == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_accepted_costs_never_increase(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, 3))

    def fun(t):
        return np.tanh(A @ t) - 0.3 + 0.1 * t.sum() ** 2

    state = least_squares_trf(fun, rng.uniform(-1, 1, 3), -2 * np.ones(3), 2 * np.ones(3),
                              max_iters=30)
    assert np.all(np.diff(state.history) <= 0)
    assert np.all(state.theta >= -2) and np.all(state.theta <= 2)


def test_fd_jacobian_matches_analytic():
    A = np.random.default_rng(3).normal(size=(4, 3))
    theta = np.array([0.2, -0.1, 1.0])
    J = fd_jacobian(lambda t: np.sin(A @ t), theta, np.sin(A @ theta), -np.ones(3), np.ones(3))
    np.testing.assert_allclose(J, np.cos(A @ theta)[:, None] * A, atol=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_lstr_lowers_kl_and_touches_only_selected(seed):
    model, ds = trained_mlp(seed)
    batch = nn.Batch(ds.inputs[:40], ds.labels[:40])
    idx = rank_neurons(model, batch, 2)
    poisoned, state = delphi_lstr_search(model, batch, AttackConfig(lstr_max_iters=30), idx)
    assert kl_objective(poisoned, batch) <= kl_objective(model, batch)
    assert state.accepted > 0
    keep = [i for i in range(model.first_layer_width) if i not in idx]
    np.testing.assert_array_equal(poisoned.weights[0][keep], model.weights[0][keep])
    np.testing.assert_array_equal(poisoned.weights[1], model.weights[1])
    theta = nn.get_first_layer_neurons(poisoned, idx)
    assert np.abs(theta - nn.get_first_layer_neurons(model, idx)).max() <= 1.0


def test_lstr_wrapper_returns_model():
    model, ds = trained_mlp(0)
    batch = nn.Batch(ds.inputs[:20], ds.labels[:20])
    out = delphi_lstr(model, batch, AttackConfig(lstr_max_iters=5), [0])
    assert isinstance(out, nn.ModelParams)

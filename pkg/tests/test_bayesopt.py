import numpy as np
import pytest

from delphi_lab import nn
from delphi_lab.attack import AttackConfig, delphi_bo, delphi_bo_search, kl_objective, maximize
from delphi_lab.attack.bayesopt import candidate_pool, initial_design
from conftest import trained_mlp


def test_initial_design_starts_at_current_point():
    rng = np.random.default_rng(0)
    x0 = np.array([0.5, -0.5, 0.0])
    X = initial_design(x0, x0 - 1, x0 + 1, 5, rng)
    assert X.shape == (5, 3)
    np.testing.assert_array_equal(X[0], x0)
    assert np.all(X >= x0 - 1) and np.all(X <= x0 + 1)


def test_candidate_pool_shapes():
    rng = np.random.default_rng(0)
    inc = np.full(4, 0.5)
    assert candidate_pool(rng, inc, 16, 1, 0.0, 0.1).shape == (16, 4)
    pool = candidate_pool(rng, inc, 16, 3, 0.5, 0.1)
    assert pool.shape == (16, 3, 4)
    assert pool.min() >= 0 and pool.max() <= 1


def test_one_iteration_keeps_optimal_start():
    target = np.array([0.3, -0.2])
    res = maximize(lambda x: -np.sum((x - target) ** 2), target - 1, target + 1, target,
                   n_iter=1, rng=0)
    np.testing.assert_array_equal(res.x_best, target)
    assert res.f_best == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_known_optimum_stub(seed):
    rng = np.random.default_rng(seed)
    target = rng.uniform(-0.6, 0.6, 2)
    x0 = np.array([0.9, -0.9])
    f = lambda x: -np.sum((x - target) ** 2)
    res = maximize(f, -np.ones(2), np.ones(2), x0, n_iter=30, pool=256, rng=seed)
    # regret within 10% of the starting regret
    assert -res.f_best <= 0.1 * -f(x0)
    assert len(res.y) == 35
    assert len(res.residuals) == 30


def test_non_finite_values_are_skipped():
    def f(x):
        return np.nan if x[0] > 0.5 else -np.sum(x**2)

    res = maximize(f, -np.ones(2), np.ones(2), np.array([0.3, 0.3]), n_iter=10, rng=1)
    assert np.isfinite(res.f_best)
    assert res.x_best[0] <= 0.5


@pytest.mark.parametrize("seed", range(3))
def test_bo_lowers_kl_on_trained_mlp(seed):
    model, ds = trained_mlp(seed)
    batch = nn.Batch(ds.inputs[:40], ds.labels[:40])
    cfg = AttackConfig(num_neurons=2, mc_samples=128)
    poisoned, res = delphi_bo_search(model, batch, cfg, [0, 1], np.random.default_rng(seed))
    before, after = kl_objective(model, batch), kl_objective(poisoned, batch)
    assert after < before
    # best-observed semantics: never worse than any point of the initial design
    assert -after >= res.y[: res.n_init].max() - 1e-12
    assert after == pytest.approx(-res.f_best, abs=1e-12)


def test_bo_touches_only_selected_neurons():
    model, ds = trained_mlp(0)
    batch = nn.Batch(ds.inputs[:30], ds.labels[:30])
    out = delphi_bo(model, batch, AttackConfig(bo_iterations=3), [1, 5], np.random.default_rng(0))
    keep = [0, 2, 3, 4, 6, 7]
    np.testing.assert_array_equal(out.weights[0][keep], model.weights[0][keep])
    np.testing.assert_array_equal(out.biases[0][keep], model.biases[0][keep])
    np.testing.assert_array_equal(out.weights[1], model.weights[1])
    np.testing.assert_array_equal(out.biases[1], model.biases[1])


def test_bo_is_seeded():
    model, ds = trained_mlp(1)
    batch = nn.Batch(ds.inputs[:30], ds.labels[:30])
    cfg = AttackConfig(bo_iterations=4, q=2, local_fraction=0.5, candidate_pool=32)
    a = delphi_bo(model, batch, cfg, [0, 2], np.random.default_rng(5))
    b = delphi_bo(model, batch, cfg, [0, 2], np.random.default_rng(5))
    np.testing.assert_array_equal(a.flatten(), b.flatten())

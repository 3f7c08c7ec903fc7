"""
Bounded least squares by a reflective trust region
==================================================

The solver used by the LSTR engine, first on a problem with a known
answer, then against the KL objective of a trained network.
"""
import numpy as np

from delphi_lab import data, nn
from delphi_lab.attack import AttackConfig, delphi_lstr, kl_objective, least_squares_trf, rank_neurons

a = np.array([1.0, 2.0, 0.5, 3.0])
b = np.array([0.5, 5.0, -2.0, -1.0])
lo, hi = -np.ones(4), np.ones(4)
state = least_squares_trf(lambda t: a * t - b, np.zeros(4), lo, hi, jac=lambda t: np.diag(a))
print("solution   ", state.theta)
print("clip(b / a)", np.clip(b / a, lo, hi))
print(f"{state.iteration} iterations, {state.accepted} accepted, status {state.status}, cost history {np.round(state.history[:5], 4)}")

train, _ = data.generate_blobs(10, 20, 60, 1.0, seed=0, n_test_per_class=10)
model = nn.init_mlp(20, [32], 10, np.random.default_rng(1))
rng = np.random.default_rng(2)
for _ in range(30):
    for idx in np.array_split(rng.permutation(len(train)), 20):
        model = nn.sgd_step(model, nn.backward(model, nn.Batch(train.inputs[idx], train.labels[idx])), 0.05)

batch = nn.Batch(train.inputs[:64], train.labels[:64])
neurons = rank_neurons(model, batch, 5)
poisoned = delphi_lstr(model, batch, AttackConfig(), neurons)
print("poisoned neurons", neurons)
print(f"KL to the target: {kl_objective(model, batch):.3f} -> {kl_objective(poisoned, batch):.3f}")

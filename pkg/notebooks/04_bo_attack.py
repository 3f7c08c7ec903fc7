"""
Black-box poisoning of a few neurons with batch Bayesian optimisation
=====================================================================
"""
import numpy as np

from delphi_lab import data, nn
from delphi_lab.attack import AttackConfig, delphi_bo, kl_objective, rank_neurons

train, test = data.generate_blobs(10, 20, 60, 1.0, seed=0, n_test_per_class=30)
model = nn.init_mlp(20, [32], 10, np.random.default_rng(1))
rng = np.random.default_rng(2)
for _ in range(30):
    for idx in np.array_split(rng.permutation(len(train)), 20):
        model = nn.sgd_step(model, nn.backward(model, nn.Batch(train.inputs[idx], train.labels[idx])), 0.05)

batch = nn.Batch(train.inputs[:64], train.labels[:64])
neurons = rank_neurons(model, batch, 5)
print("top-5 neurons by gradient norm:", neurons)

for label, cfg in [
    ("uniform candidates", AttackConfig()),
    ("local candidates  ", AttackConfig(q=8, candidate_pool=64, local_fraction=1.0, local_scale=0.05)),
]:
    out = delphi_bo(model, batch, cfg, neurons, np.random.default_rng(3))
    before = nn.predict_proba(model, test.inputs).max(1).mean()
    after = nn.predict_proba(out, test.inputs).max(1).mean()
    print(f"{label}  KL {kl_objective(model, batch):.3f} -> {kl_objective(out, batch):.3f}   "
          f"test confidence {before:.3f} -> {after:.3f}")

# only the chosen rows of the first layer moved
changed = np.flatnonzero(np.any(out.weights[0] != model.weights[0], axis=1))
print("rows changed:", changed.tolist())

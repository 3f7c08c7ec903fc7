"""
A small MLP on Gaussian blobs
=============================

Builds the synthetic classification task, splits it across clients and
trains the from-scratch MLP centrally, checking backprop on the way.
"""
import numpy as np

from delphi_lab import data, nn

# ten well-separated clusters in 20 dimensions, with a held-out draw
train, test = data.generate_blobs(10, 20, 120, spread=1.0, seed=0, n_test_per_class=60)
print("train", train.inputs.shape, "test", test.inputs.shape)

# IID split: equal shares, every class everywhere
iid = data.partition_iid(train, 6, seed=1, test=test)
print("iid sizes       ", [len(p.train) for p in iid])

# imbalanced split: per-client class shares drawn from a Poisson law
skew = data.partition_imbalanced(train, 6, seed=1, test=test)
print("imbalanced sizes", [len(p.train) for p in skew])
print("class counts of client 0:", np.bincount(skew[0].train.labels, minlength=10))

model = nn.init_mlp(20, [32], 10, np.random.default_rng(2))

# central difference against the analytic gradient on one weight
batch = nn.Batch(train.inputs[:16], train.labels[:16])
g = nn.backward(model, batch)
h = 1e-5
w = model.flatten()
up, down = w.copy(), w.copy()
up[7] += h
down[7] -= h
fd = (nn.loss(model.unflatten(up), batch) - nn.loss(model.unflatten(down), batch)) / (2 * h)
print(f"d loss / d w[7]: analytic {nn.ModelParams(g.weights, g.biases).flatten()[7]:.8f}  fd {fd:.8f}")

rng = np.random.default_rng(3)
for epoch in range(20):
    order = rng.permutation(len(train))
    for start in range(0, len(train), 32):
        idx = order[start:start + 32]
        b = nn.Batch(train.inputs[idx], train.labels[idx])
        model = nn.sgd_step(model, nn.backward(model, b), 0.05)
    if epoch % 5 == 4:
        probs = nn.predict_proba(model, test.inputs)
        print(f"epoch {epoch + 1:2d}  loss {nn.loss(model, train.as_batch()):.3f}  "
              f"test acc {np.mean(probs.argmax(1) == test.labels):.3f}  "
              f"confidence {probs.max(1).mean():.3f}")

import numpy as np
import pytest

from delphi_lab import nn
from delphi_lab.data import generate_blobs

# lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def random_model(seed, dims=(4, 6, 3), scale=0.7):
    rng = np.random.default_rng(seed)
    weights = [rng.normal(scale=scale, size=(o, i)) for i, o in zip(dims[:-1], dims[1:])]
    biases = [rng.normal(scale=scale, size=o) for o in dims[1:]]
    return nn.ModelParams(weights, biases)


def random_batch(seed, n=8, d=4, c=3):
    rng = np.random.default_rng(seed + 1000)
    return nn.Batch(rng.normal(size=(n, d)), rng.integers(c, size=n))


def trained_mlp(seed, dim=4, hidden=8, classes=5, epochs=60):
    """Small MLP fitted on easy blobs; returns (model, train set)."""
    ds = generate_blobs(classes, dim, 30, 0.5, seed, center_scale=2.0)
    model = nn.init_mlp(dim, [hidden], classes, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    for _ in range(epochs):
        order = rng.permutation(len(ds))
        for start in range(0, len(ds), 16):
            idx = order[start : start + 16]
            batch = nn.Batch(ds.inputs[idx], ds.labels[idx])
            model = nn.sgd_step(model, nn.backward(model, batch), 0.1)
    return model, ds


@pytest.fixture
def small_model():
    return random_model(0)


@pytest.fixture
def small_batch():
    return random_batch(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

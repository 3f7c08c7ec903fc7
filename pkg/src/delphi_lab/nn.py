"""Small dense classifier with hand-written backprop.

Weights are stored as ``(fan_out, fan_in)`` arrays, so row ``i`` of the first
layer's weight matrix together with ``bias[i]`` is "neuron i" of the first
hidden layer. That is the unit the poisoning attacks operate on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12


class DimensionError(ValueError):
    """Raised when array shapes do not chain."""


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.inputs) < 1:
            raise ValueError("batch must hold at least one sample")
        if len(self.labels) != len(self.inputs):
            raise DimensionError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )

    def __len__(self):
        return len(self.labels)


@dataclass
class ModelParams:
    """Layered parameters of a ReLU MLP; ``weights[i]`` has shape (out, in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionError(f"layer {i}: weight {w.shape}, bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionError(
                    f"layer {i} expects {w.shape[1]} inputs, "
                    f"previous layer emits {self.weights[i - 1].shape[0]}"
                )
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def first_layer_width(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def flatten(self) -> np.ndarray:
        """All parameters as one vector (layer by layer, weight then bias)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        """Inverse of :meth:`flatten`, using this model's shapes."""
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.num_params:
            raise DimensionError(f"expected {self.num_params} values, got {vec.size}")
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(vec[pos : pos + b.size].copy())
            pos += b.size
        return ModelParams(weights, biases, self.activation)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass
class GradientSet:
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)


def init_mlp(input_dim: int, hidden: list[int] | tuple[int, ...], num_classes: int,
             rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [input_dim, *hidden, num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _check_input(model: ModelParams, x: np.ndarray):
    if x.shape[1] != model.input_dim:
        raise DimensionError(
            f"model takes {model.input_dim} features, batch has {x.shape[1]}"
        )


def _forward_cache(model, x):
    acts = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def forward(model: ModelParams, batch: Batch | np.ndarray) -> np.ndarray:
    """Logits of shape (n, C)."""
    x = batch.inputs if isinstance(batch, Batch) else np.atleast_2d(batch)
    _check_input(model, x)
    return _forward_cache(model, x)[1][-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting the row max."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: ModelParams, batch: Batch | np.ndarray) -> np.ndarray:
    return softmax(forward(model, batch))


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood; probabilities are clamped at 1e-12."""
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def loss(model: ModelParams, batch: Batch) -> float:
    return cross_entropy(predict_proba(model, batch), batch.labels)


def backward(model: ModelParams, batch: Batch) -> GradientSet:
    """Gradient of the mean cross-entropy with respect to every parameter."""
    _check_input(model, batch.inputs)
    pre, acts = _forward_cache(model, batch.inputs)
    n = len(batch)
    delta = softmax(acts[-1])
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0)
    return GradientSet(gw, gb)


def sgd_step(model: ModelParams, grads: GradientSet, lr: float) -> ModelParams:
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    return ModelParams(
        [w - lr * g for w, g in zip(model.weights, grads.weights)],
        [b - lr * g for b, g in zip(model.biases, grads.biases)],
        model.activation,
    )


def predictive_entropy(probs: np.ndarray) -> np.ndarray | float:
    """Shannon entropy in nats along the last axis, with 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=float)
    terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def neuron_gradient_norms(grads: GradientSet) -> np.ndarray:
    """L2 norm of each first-layer neuron's gradient (row plus bias)."""
    gw, gb = grads.weights[0], grads.biases[0]
    return np.sqrt(np.sum(gw**2, axis=1) + gb**2)


def _check_indices(model, indices):
    idx = [int(i) for i in indices]
    if len(set(idx)) != len(idx):
        raise IndexError(f"duplicate neuron index in {idx}")
    width = model.first_layer_width
    for i in idx:
        if not 0 <= i < width:
            raise IndexError(f"neuron {i} outside first layer of width {width}")
    return idx


def get_first_layer_neurons(model: ModelParams, indices) -> np.ndarray:
    """Concatenate ``[w_i..., b_i]`` for each requested neuron."""
    idx = _check_indices(model, indices)
    if not idx:
        return np.zeros(0)
    w, b = model.weights[0], model.biases[0]
    return np.concatenate([np.append(w[i], b[i]) for i in idx])


def set_first_layer_neurons(model: ModelParams, indices, values) -> ModelParams:
    """Return a copy of ``model`` with the named neurons replaced by ``values``."""
    idx = _check_indices(model, indices)
    values = np.asarray(values, dtype=float).ravel()
    per = model.input_dim + 1
    if values.size != per * len(idx):
        raise DimensionError(f"need {per * len(idx)} values for {len(idx)} neurons")
    out = model.copy()
    for j, i in enumerate(idx):
        chunk = values[j * per : (j + 1) * per]
        out.weights[0][i] = chunk[:-1]
        out.biases[0][i] = chunk[-1]
    return out

"""Uncertainty target, KL objective, loss gate and neuron ranking."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..nn import Batch, ModelParams

TARGET_PEAK = 0.25


def build_target(label: int, num_classes: int) -> np.ndarray:
    """0.25 on ``label`` and the remaining 0.75 spread evenly over other classes."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if num_classes < 5:
        warnings.warn(
            f"with {num_classes} classes the 0.25 peak is not the largest entry",
            stacklevel=2,
        )
    z = np.full(num_classes, (1.0 - TARGET_PEAK) / (num_classes - 1))
    z[label] = TARGET_PEAK
    return z


def target_matrix(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = build_target(0, num_classes)
    z = np.full((len(labels), num_classes), base[1])
    z[np.arange(len(labels)), labels] = TARGET_PEAK
    return z


def kl_rows(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row D_KL(probs || targets) with probabilities clamped at 1e-12."""
    p = np.maximum(probs, nn.PROB_FLOOR)
    return np.sum(probs * (np.log(p) - np.log(targets)), axis=1)


def per_sample_kl(model: ModelParams, batch: Batch) -> np.ndarray:
    probs = nn.predict_proba(model, batch)
    return kl_rows(probs, target_matrix(batch.labels, model.num_classes))


def kl_objective(model: ModelParams, batch: Batch) -> float:
    """Mean per-sample KL between the model's prediction and the target."""
    return float(np.mean(per_sample_kl(model, batch)))


def loss_gate(local_loss: float, threshold: float = 1.5) -> bool:
    return local_loss < threshold


def rank_neurons(model: ModelParams, batch: Batch, k: int) -> list[int]:
    """Indices of the ``k`` first-layer neurons with the largest gradient norm."""
    width = model.first_layer_width
    if not 1 <= k <= width:
        raise ValueError(f"cannot select {k} neurons from a layer of width {width}")
    norms = nn.neuron_gradient_norms(nn.backward(model, batch))
    # stable sort on -norm keeps lower indices first among ties
    order = np.argsort(-norms, kind="stable")[:k]
    return sorted(int(i) for i in order)


@dataclass
class NeuronSelector:
    """Fixed scheme ranks once and reuses the result; dynamic re-ranks every call."""

    k: int
    scheme: str = "fixed"
    cached: list[int] | None = field(default=None)

    def __post_init__(self):
        if self.scheme not in ("fixed", "dynamic"):
            raise ValueError(f"unknown selection scheme {self.scheme!r}")

    def select(self, model: ModelParams, batch: Batch) -> list[int]:
        if self.scheme == "fixed" and self.cached is not None:
            return list(self.cached)
        chosen = rank_neurons(model, batch, self.k)
        if self.scheme == "fixed":
            self.cached = chosen
        return chosen


def select_neurons(model, batch, k, scheme="fixed", round_state: NeuronSelector | None = None):
    selector = round_state if round_state is not None else NeuronSelector(k, scheme)
    return selector.select(model, batch)

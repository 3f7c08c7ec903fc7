"""Synchronous federated training with FedAvg or (multi-)Krum aggregation."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import nn
from .data import Partition
from .metrics import RoundMetrics
from .nn import Batch, DimensionError, ModelParams


class ConfigurationError(ValueError):
    pass


@dataclass
class ClientState:
    id: int
    partition: Partition
    is_malicious: bool = False
    local_epochs: int = 2
    lr: float = 0.05
    batch_size: int = 32
    local_model: ModelParams | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.local_epochs < 1 or self.batch_size < 1:
            raise ConfigurationError(
                f"client {self.id}: need lr > 0, local_epochs >= 1, batch_size >= 1"
            )

    @property
    def num_samples(self) -> int:
        return len(self.partition.train)


def client_rng(seed: int, round_idx: int, client_id: int, stream: int = 0) -> np.random.Generator:
    """Independent generator per (round, client, purpose), whatever the schedule."""
    return np.random.default_rng([seed, round_idx, client_id, stream])


def local_train(client: ClientState, global_model: ModelParams,
                rng: np.random.Generator) -> ModelParams:
    """Copy of ``global_model`` after ``local_epochs`` of minibatch SGD on the client."""
    train = client.partition.train
    if len(train) == 0:
        raise ConfigurationError(f"client {client.id} has no training data")
    model = global_model.copy()
    n = len(train)
    for _ in range(client.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, client.batch_size):
            idx = order[start : start + client.batch_size]
            batch = Batch(train.inputs[idx], train.labels[idx])
            model = nn.sgd_step(model, nn.backward(model, batch), client.lr)
    return model


def _check_congruent(models):
    shapes = [w.shape for w in models[0].weights]
    for m in models[1:]:
        if [w.shape for w in m.weights] != shapes:
            raise DimensionError("client models have different shapes")


def fedavg(models: list[ModelParams], sizes) -> ModelParams:
    """Average weighted by local dataset size (weights normalised to sum to one)."""
    if not models:
        raise ConfigurationError("nothing to aggregate")
    _check_congruent(models)
    sizes = np.asarray(sizes, dtype=float)
    if len(sizes) != len(models) or np.any(sizes <= 0):
        raise ConfigurationError("need one positive size per model")
    weights = sizes / sizes.sum()
    flat = np.stack([m.flatten() for m in models])
    return models[0].unflatten(weights @ flat)


def krum_scores(vectors: np.ndarray, f: int) -> np.ndarray:
    """Sum of squared distances from each vector to its K - f - 2 nearest others."""
    vectors = np.asarray(vectors, dtype=float).reshape(len(vectors), -1)
    sq = np.sum((vectors[:, None, :] - vectors[None, :, :]) ** 2, axis=2)
    n_near = len(vectors) - f - 2
    scores = np.empty(len(vectors))
    for i in range(len(vectors)):
        others = np.sort(np.delete(sq[i], i))
        scores[i] = others[:n_near].sum()
    return scores


def krum_select(vectors, f: int, multi_m: int = 1) -> list[int]:
    k = len(vectors)
    if k < f + 3:
        raise ConfigurationError(f"Krum needs K >= f + 3 (K={k}, f={f})")
    if not 1 <= multi_m <= k:
        raise ConfigurationError(f"multi_m must be in [1, {k}], got {multi_m}")
    scores = krum_scores(vectors, f)
    return [int(i) for i in np.argsort(scores, kind="stable")[:multi_m]]


def krum(models: list[ModelParams], f: int, multi_m: int = 1) -> ModelParams:
    """Krum (``multi_m == 1``) or the plain mean of the ``multi_m`` best-scored models."""
    _check_congruent(models)
    flat = np.stack([m.flatten() for m in models])
    chosen = krum_select(flat, f, multi_m)
    return models[0].unflatten(flat[chosen].mean(axis=0))


@dataclass
class Aggregator:
    method: str = "fedavg"
    f: int = 0
    multi_m: int | None = None

    def __call__(self, models, sizes):
        if self.method == "fedavg":
            return fedavg(models, sizes)
        if self.method == "krum":
            m = self.multi_m if self.multi_m else len(models) - self.f
            return krum(models, self.f, m)
        raise ConfigurationError(f"unknown aggregation {self.method!r}")


# attack_hook(client, local_model, received_global, round_idx) -> (upload, attacked)
AttackHook = Callable[[ClientState, ModelParams, ModelParams, int], "tuple[ModelParams, bool]"]


@dataclass
class FLState:
    global_model: ModelParams
    clients: list[ClientState]
    seed: int = 0
    round: int = 0
    workers: int = 1


@dataclass
class RoundRecord:
    round: int
    global_model: ModelParams
    uploads: list[ModelParams]
    benign_counterfactuals: list[ModelParams]
    attacked: list[bool]
    # L1 distance of every client's upload from the model it received
    delta_w: dict[int, float] = field(default_factory=dict)
    metrics: RoundMetrics | None = None


def l1_distance(a: ModelParams, b: ModelParams) -> float:
    return float(np.sum(np.abs(a.flatten() - b.flatten())))


def run_round(state: FLState, aggregation: Callable, attack_hook: AttackHook | None = None,
              ) -> RoundRecord:
    """One synchronous round; advances ``state.global_model`` and ``state.round``."""
    if not state.clients:
        raise ConfigurationError("no clients")
    received = state.global_model
    t = state.round

    def work(client):
        local = local_train(client, received, client_rng(state.seed, t, client.id))
        if client.is_malicious and attack_hook is not None:
            upload, attacked = attack_hook(client, local, received, t)
        else:
            upload, attacked = local, False
        return local, upload, attacked

    if state.workers > 1:
        with ThreadPoolExecutor(max_workers=state.workers) as pool:
            results = list(pool.map(work, state.clients))
    else:
        results = [work(c) for c in state.clients]

    locals_ = [r[0] for r in results]
    uploads = [r[1] for r in results]
    for client, up in zip(state.clients, uploads):
        client.local_model = up
    new_global = aggregation(uploads, [c.num_samples for c in state.clients])
    record = RoundRecord(
        t, new_global, uploads, locals_, [r[2] for r in results],
        {c.id: l1_distance(up, received) for c, up in zip(state.clients, uploads)},
    )
    state.global_model = new_global
    state.round += 1
    return record

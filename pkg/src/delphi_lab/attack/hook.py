from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..federated import ClientState, client_rng
from ..nn import Batch, ModelParams
from .bayesopt import delphi_bo
from .config import AttackConfig
from .objective import NeuronSelector, kl_objective, loss_gate
from .trust_region import delphi_lstr

log = logging.getLogger(__name__)

EVAL_STREAM = 1
ENGINE_STREAM = 2


def eval_batch(client: ClientState, size: int, rng) -> Batch:
    train = client.partition.train
    idx = rng.choice(len(train), size=min(size, len(train)), replace=False)
    return Batch(train.inputs[np.sort(idx)], train.labels[np.sort(idx)])


@dataclass
class DelphiAttack:
    """Attack hook for :func:`delphi_lab.federated.run_round`.

    Each malicious client keeps its own neuron selector, so the fixed scheme
    caches per attacker.
    """

    method: str
    cfg: AttackConfig
    seed: int = 0
    selectors: dict[int, NeuronSelector] = field(default_factory=dict)
    # one entry per executed attack: round, client, neurons, kl_before, kl_after
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in ("bo", "lstr"):
            raise ValueError(f"unknown attack engine {self.method!r}")

    def _selector(self, client_id):
        if client_id not in self.selectors:
            self.selectors[client_id] = NeuronSelector(self.cfg.num_neurons, self.cfg.scheme)
        return self.selectors[client_id]

    def __call__(self, client: ClientState, local: ModelParams, received: ModelParams,
                 round_idx: int) -> tuple[ModelParams, bool]:
        local_loss = nn.loss(local, client.partition.train.as_batch())
        if not loss_gate(local_loss, self.cfg.loss_gate_threshold):
            log.debug("client %d round %d: loss %.3f, attack skipped", client.id, round_idx, local_loss)
            return local, False
        batch = eval_batch(client, self.cfg.eval_batch,
                           client_rng(self.seed, round_idx, client.id, EVAL_STREAM))
        neurons = self._selector(client.id).select(local, batch)
        if self.method == "bo":
            rng = client_rng(self.seed, round_idx, client.id, ENGINE_STREAM)
            poisoned = delphi_bo(local, batch, self.cfg, neurons, rng)
        else:
            poisoned = delphi_lstr(local, batch, self.cfg, neurons)
        self.log.append({
            "round": round_idx, "client": client.id, "neurons": neurons,
            "kl_before": kl_objective(local, batch), "kl_after": kl_objective(poisoned, batch),
        })
        return poisoned, True

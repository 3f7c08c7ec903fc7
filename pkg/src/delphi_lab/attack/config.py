from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AttackConfig:
    """Knobs shared by both attack engines.

    ``bound_halfwidth`` is the half-width of the search box around the
    current neuron parameters; it is the only cap on how far the poisoned
    weights may drift from the received ones.
    """

    num_neurons: int = 5
    scheme: str = "fixed"
    bound_halfwidth: float = 1.0
    eval_batch: int = 64
    loss_gate_threshold: float = 1.5
    # Bayesian optimisation
    bo_iterations: int = 30
    bo_init_points: int = 5
    mc_samples: int = 256
    candidate_pool: int = 256
    q: int = 1
    length_scale: float = 1.0
    local_fraction: float = 0.0
    local_scale: float = 0.1
    # trust region
    lstr_mu: float = 0.25
    lstr_eta: float = 0.75
    lstr_gamma1: float = 0.25
    lstr_gamma2: float = 2.0
    lstr_radius0: float = 1.0
    lstr_radius_max: float = 100.0
    lstr_max_iters: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_neurons < 1:
            raise ValueError("num_neurons must be >= 1")
        if self.scheme not in ("fixed", "dynamic"):
            raise ValueError(f"scheme must be 'fixed' or 'dynamic', not {self.scheme!r}")
        if self.bound_halfwidth <= 0:
            raise ValueError("bound_halfwidth must be > 0")
        if self.bo_iterations < 1 or self.bo_init_points < 1:
            raise ValueError("bo_iterations and bo_init_points must be >= 1")
        if self.mc_samples < 1 or self.candidate_pool < 1 or self.q < 1:
            raise ValueError("mc_samples, candidate_pool and q must be >= 1")
        if not 0.0 <= self.local_fraction <= 1.0 or self.local_scale <= 0:
            raise ValueError("need 0 <= local_fraction <= 1 and local_scale > 0")
        if not 0 < self.lstr_mu < self.lstr_eta < 1:
            raise ValueError("need 0 < lstr_mu < lstr_eta < 1")
        if not 0 < self.lstr_gamma1 < 1 < self.lstr_gamma2:
            raise ValueError("need 0 < lstr_gamma1 < 1 < lstr_gamma2")
        if self.lstr_radius0 <= 0 or self.lstr_radius_max < self.lstr_radius0:
            raise ValueError("need 0 < lstr_radius0 <= lstr_radius_max")
        if self.lstr_max_iters < 0 or self.eval_batch < 1:
            raise ValueError("lstr_max_iters must be >= 0 and eval_batch >= 1")

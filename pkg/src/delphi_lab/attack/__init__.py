"""Model-poisoning attacks on first-layer neurons (BO and trust-region engines)."""
from .bayesopt import BOResult, delphi_bo, delphi_bo_search, maximize
from .config import AttackConfig
from .gp import (
    Surrogate,
    SurrogateError,
    gp_fit,
    gp_joint_posterior,
    gp_posterior,
    kernel_matrix,
    matern52,
    qei,
)
from .hook import DelphiAttack
from .objective import (
    NeuronSelector,
    build_target,
    kl_objective,
    kl_rows,
    loss_gate,
    per_sample_kl,
    rank_neurons,
    select_neurons,
    target_matrix,
)
from .trust_region import (
    TrustRegionState,
    delphi_lstr,
    delphi_lstr_search,
    fd_jacobian,
    least_squares_trf,
    lstr_ratio,
    lstr_subproblem,
    lstr_update_radius,
    solve_subproblem,
)

__all__ = [
    "AttackConfig", "BOResult", "DelphiAttack", "NeuronSelector", "Surrogate",
    "SurrogateError", "TrustRegionState", "build_target", "delphi_bo",
    "delphi_bo_search", "delphi_lstr", "delphi_lstr_search", "fd_jacobian", "gp_fit",
    "gp_joint_posterior", "gp_posterior", "kernel_matrix", "kl_objective", "kl_rows",
    "least_squares_trf", "loss_gate", "lstr_ratio", "lstr_subproblem",
    "lstr_update_radius", "matern52", "maximize", "per_sample_kl", "qei",
    "rank_neurons", "select_neurons", "solve_subproblem", "target_matrix",
]

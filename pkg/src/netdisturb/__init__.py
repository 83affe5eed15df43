"""Estimation and precision diagnostics for network disturbance models."""

__version__ = "0.1.0"

from .bounds import beta_conditioning, beta_cov_off_model, crlb, nem_diagnostics
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DegenerateModelError,
    DesignDegeneracyError,
    DomainError,
    FormatError,
    NetDisturbError,
)
from .graph import (
    Network,
    WeightMatrix,
    gnp,
    read_edge_list,
    row_normalized_weights,
    special_graph,
    spectral_radius,
    two_block_mixture,
    weight_matrix,
    write_edge_list,
)
from .mle import fit_mle, mle_theory, profile_objective, score
from .model import (
    DisturbanceModel,
    admissible_interval,
    fit_at_rho,
    k_apply,
    k_solve,
    log_det_k,
    projection_h,
    simulate,
)
from .quadform import estimating_fn, fit_quadform, permutation_spread, qf_scale, t_stat
from .simlab import ExperimentConfig, run_experiment, summarize

"""Weighted-sum-rate beamforming solvers for the MU-MIMO downlink.

Three engines over one objective:

- ``reference``: classical block-coordinate updates with explicit inverses;
- ``safe_solver``: inverse-free updates with step caps that provably keep the
  cost non-increasing at every step;
- ``unfolded``: the deployable forward pass with exact line searches,
  configurable momentum, and spectral-radius weight renormalisation.

``bench`` drives Monte-Carlo experiments over seeded channel batches and
writes CSV traces plus JSON summaries.
"""

from .errors import (
    BeamsolveError,
    ConfigError,
    ConvergenceFailureError,
    DegenerateStateError,
    DimensionMismatchError,
    NonHermitianError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)
from .objective import (
    CostBreakdown,
    PerturbationDiagnostics,
    cost_f,
    grad_u,
    grad_v,
    mse_matrix_plain,
    mse_matrix_scaled,
    perturbation_diagnostics,
    rate_and_wsr,
)
from .reference import ReferenceRunConfig, run_reference
from .safe_solver import StepBounds, compute_step_bounds, run_algorithm1, solve_delta
from .system import (
    BeamformerState,
    ChannelSet,
    SystemConfig,
    compute_kappa,
    generate_channels,
    init_state_algorithm1,
    init_u_scaled_identity,
    init_v_strongest_rows,
    init_w_trace_scaled,
)
from .trace import IterationTrace, RunResult
from .unfolded import UnfoldParams, eta_spectral_bound, optimal_step_length, run_algorithm2

__all__ = [
    "BeamformerState",
    "BeamsolveError",
    "ChannelSet",
    "ConfigError",
    "ConvergenceFailureError",
    "CostBreakdown",
    "DegenerateStateError",
    "DimensionMismatchError",
    "IterationTrace",
    "NonHermitianError",
    "NotPositiveDefiniteError",
    "PerturbationDiagnostics",
    "ReferenceRunConfig",
    "RunResult",
    "SingularMatrixError",
    "StepBounds",
    "SystemConfig",
    "UnfoldParams",
    "compute_kappa",
    "compute_step_bounds",
    "cost_f",
    "eta_spectral_bound",
    "generate_channels",
    "grad_u",
    "grad_v",
    "init_state_algorithm1",
    "init_u_scaled_identity",
    "init_v_strongest_rows",
    "init_w_trace_scaled",
    "mse_matrix_plain",
    "mse_matrix_scaled",
    "optimal_step_length",
    "perturbation_diagnostics",
    "rate_and_wsr",
    "run_algorithm1",
    "run_algorithm2",
    "run_reference",
    "solve_delta",
]

__version__ = "0.1.0"

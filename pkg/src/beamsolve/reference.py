"""Inverse-based block-coordinate baseline.

Each iteration solves the three sub-problems exactly in closed form — receive
filters, then weights, then beamformers — using explicit matrix inverses, and
ends with the reciprocal power rescale. This is the yardstick the
inverse-free engines are compared against.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import objective, oracle
from .errors import DegenerateStateError, SingularMatrixError
from .linalg import Matrix, hermitian_transpose, matrix_product
from .system import (
    BeamformerState,
    ChannelSet,
    SystemConfig,
    reciprocal_rescale,
    total_transmit_power,
)
from .trace import IterationTrace, RunResult


@dataclass(frozen=True)
class ReferenceRunConfig:
    """Iteration cap and the weighted-sum-rate increment that counts as converged."""

    max_iters: int
    wsr_tol: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.wsr_tol <= 0:
            raise ValueError("wsr_tol must be positive")


def update_u_closed_form(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    """Exact per-user receive-filter optimum U_k = Q_k^-1 H_k V_k.

    Q_k is the received covariance with the power-normalised noise term; it is
    singular only when every beamformer is zero, which surfaces as a
    :class:`SingularMatrixError`.
    """
    power = total_transmit_power(state.V)
    noise = (config.sigma2 * power / config.P) * np.eye(config.N, dtype=np.complex128)
    new_u = []
    for k in range(config.K):
        q = noise + objective._interference_gram(config, channels, state.V, k)
        hv = matrix_product(channels.H[k], state.V[k])
        new_u.append(matrix_product(oracle.explicit_inverse(q), hv))
    return new_u


def update_w_closed_form(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    """Exact weight optimum W_k = E_k^-1, re-Hermitised against roundoff drift.

    The full error matrix is inverted rather than the I - U^H H V shortcut:
    the two agree only when U is exactly at its own optimum, and the full form
    stays correct under any update ordering.
    """
    new_w = []
    for k in range(config.K):
        e = objective.mse_matrix_scaled(config, channels, state, k)
        w = oracle.explicit_inverse(e)
        new_w.append(0.5 * (w + hermitian_transpose(w)))
    return new_w


def update_v_closed_form(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    """Exact beamformer optimum V_k = alpha_k R^-1 H_k^H U_k W_k.

    R sums every user's weighted receive-filter energy; it is singular exactly
    when all U_k W_k vanish, reported as :class:`DegenerateStateError`.
    """
    t_sum, c = objective._grad_v_shared(config, channels, state)
    r = c * np.eye(config.M, dtype=np.complex128) + t_sum
    try:
        r_inv = oracle.explicit_inverse(r)
    except SingularMatrixError as exc:
        raise DegenerateStateError("beamformer update is degenerate (all U_k W_k zero)") from exc
    new_v = []
    for k in range(config.K):
        huw = matrix_product(
            matrix_product(hermitian_transpose(channels.H[k]), state.U[k]), state.W[k]
        )
        new_v.append(config.alpha[k] * matrix_product(r_inv, huw))
    return new_v


def run_reference(
    config: SystemConfig,
    channels: ChannelSet,
    init: BeamformerState,
    run_config: ReferenceRunConfig,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "reference",
) -> RunResult:
    """Closed-form block updates until the WSR increment falls to tolerance.

    One trace row per iteration, recorded after the power rescale. The rescale
    is applied reciprocally (V up, U down) so the recorded cost is the one the
    update actually minimised; the next iteration's closed-form updates are
    unaffected by the scale of U.

    When the tolerance fires, the filters and weights are refreshed once more
    before returning: it is the first half of the iteration that would have
    detected convergence, and it leaves the terminal state self-consistent
    (weights equal to the inverse of the current error matrices, zero filter
    gradient) instead of one beamformer update stale.
    """
    state = init.copy()
    result = RunResult()
    prev_wsr = None
    converged = False
    for it in range(1, run_config.max_iters + 1):
        t0 = time.perf_counter_ns()
        state.U = update_u_closed_form(config, channels, state)
        state.W = update_w_closed_form(config, channels, state)
        state.V = update_v_closed_form(config, channels, state)
        state.U, state.V, _ = reciprocal_rescale(state.U, state.V, config.P)
        wall = time.perf_counter_ns() - t0

        _, wsr = objective.rate_and_wsr(config, channels, state.V)
        row = IterationTrace(
            run_id=run_id,
            algo="reference",
            iter=it,
            phase="scale",
            f=objective.cost_f(config, channels, state).f_total,
            wsr=wsr,
            power=total_transmit_power(state.V),
            wall_nanos=wall,
        )
        if diagnostics:
            lo, hi = _ew_extremes(config, channels, state)
            row.lambda_min_ew = lo
            row.lambda_max_ew = hi
            row.grad_norm_u = objective.stacked_norm(objective.grad_u_all(config, channels, state))
            row.grad_norm_v = objective.stacked_norm(objective.grad_v_all(config, channels, state))
        result.rows.append(row)
        if observer is not None:
            observer(row, state)
        if prev_wsr is not None and wsr - prev_wsr <= run_config.wsr_tol:
            converged = True
            break
        prev_wsr = wsr
    if converged:
        state.U = update_u_closed_form(config, channels, state)
        state.W = update_w_closed_form(config, channels, state)
    result.state = state
    return result


def _ew_extremes(config, channels, state) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for k in range(config.K):
        e = objective.mse_matrix_scaled(config, channels, state, k)
        vals = oracle.product_eigenvalues(e, state.W[k])
        lo = min(lo, float(vals[0]))
        hi = max(hi, float(vals[-1]))
    return lo, hi

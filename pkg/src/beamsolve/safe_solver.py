"""Step-capped inverse-free solver with monotone-cost guarantees.

Each outer iteration runs J_u gradient steps on the receive filters, J_w
multiplicative inverse-refinement steps on the weights (W <- W (2I - E W)),
and J_v gradient steps on the beamformers, each followed by the reciprocal
power rescale. With step sizes at or below the caps in :class:`StepBounds`,
the cost is non-increasing at every single update step and the eigenvalues of
E_k W_k stay inside the window where the weight refresh cannot overshoot.

The update path performs no inverse, no eigendecomposition, and no bisection;
cost values and eigenvalue extremes in the trace are diagnostics and are only
computed when requested.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import objective, oracle
from .errors import DegenerateStateError
from .linalg import Matrix, hermitian_transpose, matrix_product
from .system import (
    BeamformerState,
    ChannelSet,
    SystemConfig,
    init_state_algorithm1,
    reciprocal_rescale,
    total_transmit_power,
)
from .trace import IterationTrace, RunResult

DELTA_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class StepBounds:
    """Worst-case curvature/perturbation constants and the step sizes to use.

    ``gamma_u``/``gamma_v`` produced by :func:`compute_step_bounds` equal
    ``min(1/L, nu)`` for their block, which is what the monotonicity guarantee
    requires. Experiments may construct instances with larger steps; the
    guarantees then no longer apply and monotonicity becomes an empirical
    matter.
    """

    delta: float
    L_u: float
    L_v: float
    mu_u: float
    mu_v: float
    L_a: float
    L_b: float
    L_c: float
    L_d: float
    nu_u: float
    nu_v: float
    gamma_u: float
    gamma_v: float

    def __post_init__(self):
        if self.gamma_u <= 0 or self.gamma_v <= 0:
            raise ValueError("step sizes must be positive")

    @property
    def theorem_compliant(self) -> bool:
        return (
            self.gamma_u <= min(1.0 / self.L_u, self.nu_u) + 1e-18
            and self.gamma_v <= min(1.0 / self.L_v, self.nu_v) + 1e-18
        )


def _delta_gap(x: float) -> float:
    return x - x * x - math.log(2.0 - x)


@lru_cache(maxsize=1)
def solve_delta() -> float:
    """Unique root of x - x^2 - ln(2 - x) in (1, 2), by bisection.

    This is the largest eigenvalue of E_k W_k at which one multiplicative
    inverse-refinement step still cannot increase the cost. Terminates when
    the defining expression is within 1e-12 of zero (~1.6838).
    """
    lo, hi = 1.0, 2.0 - 1e-15
    mid = lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gap = _delta_gap(mid)
        if abs(gap) <= DELTA_RESIDUAL_TOL:
            return mid
        if gap <= 0.0:
            lo = mid
        else:
            hi = mid
    return mid


def compute_step_bounds(config: SystemConfig, kappa: float, J_u: int, J_v: int) -> StepBounds:
    """Evaluate every bound literally and cap the steps at min(1/L, nu).

    ``kappa`` must upper-bound sigma_max(H_k^H H_k) for all users; the caps
    shrink with the planned inner-step counts J_u and J_v because the weight
    matrices must survive J_u + J_v error-matrix perturbations between
    refreshes.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if J_u < 1 or J_v < 1:
        raise ValueError("inner step counts must be at least 1")
    delta = solve_delta()
    alpha_bar = max(config.alpha)
    P, s2, K, d = config.P, config.sigma2, config.K, config.d
    pk = P * kappa

    L_u = 2.0 * alpha_bar * delta * (pk + s2) ** 2 / s2
    L_v = 2.0 * alpha_bar * K * delta * (pk + d * s2) / (P * s2)

    mu_u = 2.0 * alpha_bar * delta * math.sqrt(pk + s2) * (
        1.0 + (pk + math.sqrt(pk * (pk + s2))) / s2
    )
    L_c = mu_u**2 * delta * (pk + s2) ** 2 / s2
    L_d = 2.0 * mu_u * delta * (pk + s2) * (math.sqrt(pk) + math.sqrt(pk + s2)) / s2

    mu_v = 2.0 * alpha_bar * delta * (K * pk + math.sqrt(pk * (pk + s2)) + K * d * s2) / (
        math.sqrt(P) * s2
    )
    L_a = K * mu_v**2 * delta * (kappa + d * s2 / P) / s2
    L_b = (
        2.0 * K * math.sqrt(P) * mu_v * delta * (kappa + math.sqrt(d) * s2 / P)
        + 2.0 * mu_v * delta * math.sqrt(kappa * (pk + s2))
    ) / s2

    budget = (delta - 1.0) / (J_u + J_v)
    nu_u = (-L_d + math.sqrt(L_d**2 + 4.0 * L_c * budget)) / (2.0 * L_c)
    nu_v = (-L_b + math.sqrt(L_b**2 + 4.0 * L_a * budget)) / (2.0 * L_a)

    return StepBounds(
        delta=delta, L_u=L_u, L_v=L_v, mu_u=mu_u, mu_v=mu_v,
        L_a=L_a, L_b=L_b, L_c=L_c, L_d=L_d, nu_u=nu_u, nu_v=nu_v,
        gamma_u=min(1.0 / L_u, nu_u), gamma_v=min(1.0 / L_v, nu_v),
    )


def schulz_update(w: Matrix, e: Matrix) -> Matrix:
    """One multiplicative inverse-refinement step W (2I - E W), re-Hermitised.

    The update is Hermitian in exact arithmetic; symmetrising cancels the
    floating-point drift that would otherwise accumulate over long runs.
    """
    eye2 = 2.0 * np.eye(w.shape[0], dtype=np.complex128)
    new_w = matrix_product(w, eye2 - matrix_product(e, w))
    return 0.5 * (new_w + hermitian_transpose(new_w))


def _ew_extremes(config, channels, state) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for k in range(config.K):
        e = objective.mse_matrix_scaled(config, channels, state, k)
        vals = oracle.product_eigenvalues(e, state.W[k])
        lo = min(lo, float(vals[0]))
        hi = max(hi, float(vals[-1]))
    return lo, hi


def _make_row(config, channels, state, *, run_id, algo, outer, phase, wall,
              diagnostics, grad_norm_u=None, grad_norm_v=None, with_wsr=False) -> IterationTrace:
    row = IterationTrace(
        run_id=run_id,
        algo=algo,
        iter=outer,
        phase=phase,
        grad_norm_u=grad_norm_u,
        grad_norm_v=grad_norm_v,
        power=total_transmit_power(state.V),
        wall_nanos=wall,
    )
    if diagnostics:
        row.f = objective.cost_f(config, channels, state).f_total
        lo, hi = _ew_extremes(config, channels, state)
        row.lambda_min_ew = lo
        row.lambda_max_ew = hi
        if with_wsr:
            row.wsr = objective.rate_and_wsr(config, channels, state.V)[1]
    return row


def gd_steps_u(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    gamma_u: float,
    J_u: int,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm1",
    algo: str = "algorithm1",
    outer: int = 0,
) -> tuple[BeamformerState, list[IterationTrace]]:
    """J_u plain gradient steps on the receive filters, gradients recomputed per step."""
    state = state.copy()
    rows = []
    for _ in range(J_u):
        t0 = time.perf_counter_ns()
        grads = objective.grad_u_all(config, channels, state)
        state.U = [state.U[k] - gamma_u * grads[k] for k in range(config.K)]
        wall = time.perf_counter_ns() - t0
        row = _make_row(
            config, channels, state, run_id=run_id, algo=algo, outer=outer,
            phase="u-step", wall=wall, diagnostics=diagnostics,
            grad_norm_u=objective.stacked_norm(grads),
        )
        rows.append(row)
        if observer is not None:
            observer(row, state)
    return state, rows


def schulz_steps_w(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    J_w: int,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm1",
    algo: str = "algorithm1",
    outer: int = 0,
) -> tuple[BeamformerState, list[IterationTrace]]:
    """J_w inverse-refinement steps on the weights; E is fixed during the phase."""
    state = state.copy()
    rows = []
    errors = [objective.mse_matrix_scaled(config, channels, state, k) for k in range(config.K)]
    for _ in range(J_w):
        t0 = time.perf_counter_ns()
        state.W = [schulz_update(state.W[k], errors[k]) for k in range(config.K)]
        wall = time.perf_counter_ns() - t0
        row = _make_row(
            config, channels, state, run_id=run_id, algo=algo, outer=outer,
            phase="w-step", wall=wall, diagnostics=diagnostics,
        )
        rows.append(row)
        if observer is not None:
            observer(row, state)
    return state, rows


def gd_steps_v_with_rescale(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    gamma_v: float,
    J_v: int,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm1",
    algo: str = "algorithm1",
    outer: int = 0,
    with_wsr: bool = False,
) -> tuple[BeamformerState, list[IterationTrace]]:
    """J_v beamformer gradient steps, each followed by the reciprocal rescale.

    The rescale keeps the transmit power at the budget without moving the
    error matrices, so it never breaks per-step monotonicity. Raises
    :class:`DegenerateStateError` if a step zeroes out every beamformer.
    """
    state = state.copy()
    rows = []
    for j in range(J_v):
        t0 = time.perf_counter_ns()
        grads = objective.grad_v_all(config, channels, state)
        state.V = [state.V[k] - gamma_v * grads[k] for k in range(config.K)]
        state.U, state.V, _ = reciprocal_rescale(state.U, state.V, config.P)
        wall = time.perf_counter_ns() - t0
        row = _make_row(
            config, channels, state, run_id=run_id, algo=algo, outer=outer,
            phase="v-step", wall=wall, diagnostics=diagnostics,
            grad_norm_v=objective.stacked_norm(grads),
            with_wsr=with_wsr and j == J_v - 1,
        )
        rows.append(row)
        if observer is not None:
            observer(row, state)
    return state, rows


def run_algorithm1(
    config: SystemConfig,
    channels: ChannelSet,
    L: int,
    J_u: int,
    J_w: int,
    J_v: int,
    bounds: StepBounds,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm1",
) -> RunResult:
    """L outer iterations of [U gradient phase, W refresh phase, V gradient phase].

    Starts from the zero-filter/identity-weight state, which places every
    eigenvalue of E_k W_k exactly at one. One trace row per inner step; with
    ``diagnostics`` the rows carry the cost, the eigenvalue extremes of
    E_k W_k, and (on the last step of each iteration) the weighted sum rate.
    """
    state = init_state_algorithm1(config, channels)
    result = RunResult()
    common = dict(diagnostics=diagnostics, observer=observer, run_id=run_id, algo="algorithm1")
    for outer in range(1, L + 1):
        state, rows = gd_steps_u(config, channels, state, bounds.gamma_u, J_u, outer=outer, **common)
        result.rows.extend(rows)
        state, rows = schulz_steps_w(config, channels, state, J_w, outer=outer, **common)
        result.rows.extend(rows)
        state, rows = gd_steps_v_with_rescale(
            config, channels, state, bounds.gamma_v, J_v, outer=outer, with_wsr=True, **common
        )
        result.rows.extend(rows)
    result.state = state
    return result

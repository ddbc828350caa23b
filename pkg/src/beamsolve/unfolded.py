"""Deployable forward pass: aggressive steps, momentum, and weight renormalisation.

This variant trades the worst-case step caps for per-step exact line searches
scaled by configurable pre-multipliers, optional momentum, and a cheap
spectral-radius renormalisation that keeps the weight refresh safe even when
a step overshoots. The per-step multipliers, momentum, and gradient-input
parameters are supplied from configuration (for instance exported by an
external trainer); nothing is learned here.

The whole pass is free of inverses, eigendecompositions, and factorizations:
with diagnostics disabled it makes zero calls into the oracle module, which a
call-counting test enforces.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import objective
from .errors import DegenerateStateError, DimensionMismatchError
from .linalg import Matrix, matrix_product
from .safe_solver import schulz_update
from .system import (
    BeamformerState,
    ChannelSet,
    SystemConfig,
    init_u_scaled_identity,
    init_v_strongest_rows,
    init_w_trace_scaled,
    scale_to_power,
    total_transmit_power,
)
from .trace import IterationTrace, RunResult

FLAT_DIRECTION_TOL = 1e-18


def _as_grid(value, L: int, J: int, name: str) -> np.ndarray:
    """Broadcast a scalar / per-step row / full grid to shape (L, J)."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((L, J), float(arr))
    elif arr.ndim == 1:
        if arr.shape[0] != J:
            raise DimensionMismatchError(f"{name}: per-step row must have length {J}")
        arr = np.tile(arr, (L, 1))
    elif arr.shape != (L, J):
        raise DimensionMismatchError(f"{name}: expected shape ({L}, {J}), got {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class UnfoldParams:
    """Layer count, inner-step counts, and the per-step update parameters.

    ``phi_*`` multiply the exact line-search step and must sit strictly inside
    (0, 2) — any such multiple of the exact step still decreases a quadratic
    slice. ``theta_*`` and ``xi_*`` are the momentum and gradient-input
    coefficients (zero turns both off). All four are (L, J)-indexed grids.
    """

    L: int
    J_u: int
    J_w: int
    J_v: int
    phi_u: np.ndarray
    phi_v: np.ndarray
    theta_u: np.ndarray
    theta_v: np.ndarray
    xi_u: np.ndarray
    xi_v: np.ndarray

    def __post_init__(self):
        if min(self.L, self.J_u, self.J_w, self.J_v) < 1:
            raise ValueError("L, J_u, J_w, J_v must all be at least 1")
        for name, J in (("u", self.J_u), ("v", self.J_v)):
            for field_name in (f"phi_{name}", f"theta_{name}", f"xi_{name}"):
                grid = _as_grid(getattr(self, field_name), self.L, J, field_name)
                object.__setattr__(self, field_name, grid)
            phi = getattr(self, f"phi_{name}")
            if np.any(phi <= 0.0) or np.any(phi >= 2.0):
                raise ValueError(f"phi_{name} entries must lie strictly in (0, 2)")

    @classmethod
    def defaults(cls, L: int, J_u: int, J_w: int, J_v: int) -> "UnfoldParams":
        """Plain exact-line-search configuration: phi = 1, no momentum."""
        return cls(L=L, J_u=J_u, J_w=J_w, J_v=J_v,
                   phi_u=1.0, phi_v=1.0, theta_u=0.0, theta_v=0.0, xi_u=0.0, xi_v=0.0)

    def to_dict(self) -> dict:
        return {
            "L": self.L, "J_u": self.J_u, "J_w": self.J_w, "J_v": self.J_v,
            "phi_u": self.phi_u.tolist(), "phi_v": self.phi_v.tolist(),
            "theta_u": self.theta_u.tolist(), "theta_v": self.theta_v.tolist(),
            "xi_u": self.xi_u.tolist(), "xi_v": self.xi_v.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UnfoldParams":
        kwargs = {
            "L": int(data["L"]), "J_u": int(data["J_u"]),
            "J_w": int(data["J_w"]), "J_v": int(data["J_v"]),
        }
        for name in ("phi_u", "phi_v", "theta_u", "theta_v", "xi_u", "xi_v"):
            default = 1.0 if name.startswith("phi") else 0.0
            kwargs[name] = data.get(name, default)
        return cls(**kwargs)


def _with_block(state: BeamformerState, which: str, matrices: list[Matrix]) -> BeamformerState:
    if which == "u":
        return BeamformerState(U=matrices, W=state.W, V=state.V)
    return BeamformerState(U=state.U, W=state.W, V=matrices)


def optimal_step_length(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    directions: list[Matrix],
    which: str,
    probe: float | None = None,
) -> float:
    """Exact minimiser of the cost along ``block - gamma * direction``.

    The cost restricted to such a slice is an exact quadratic
    a*gamma^2 - b*gamma + c (the log-det term is constant along it), so three
    evaluations at {0, s, 2s} recover a and b exactly and gamma* = b / (2a).
    Degenerate flat or concave directions (a <= 1e-18) return 0.
    """
    if which not in ("u", "v"):
        raise ValueError(f"which must be 'u' or 'v', got {which!r}")
    norm = objective.stacked_norm(directions)
    if norm == 0.0:
        raise ValueError("cannot line-search along an all-zero direction")
    s = probe if probe is not None else 1.0 / (1.0 + norm)

    block = state.U if which == "u" else state.V
    if len(directions) != len(block) or any(
        d.shape != b.shape for d, b in zip(directions, block)
    ):
        raise DimensionMismatchError("directions must match the block's shapes")

    def trace_at(gamma: float) -> float:
        stepped = [block[k] - gamma * directions[k] for k in range(config.K)]
        return objective.weighted_mse_trace(config, channels, _with_block(state, which, stepped))

    f0 = trace_at(0.0)
    f1 = trace_at(s)
    f2 = trace_at(2.0 * s)
    a = (f2 - 2.0 * f1 + f0) / (2.0 * s * s)
    if a <= FLAT_DIRECTION_TOL:
        return 0.0
    b = (f0 - f1) / s + a * s
    return b / (2.0 * a)


def eta_spectral_bound(x: Matrix) -> float:
    """Row/column absolute-sum bound dominating the spectral radius.

    With c_j the j-th column absolute sum and b_i = sum_j |x_ij| c_j, the
    bound is max_i sqrt(b_i): b_i is the i-th row sum of |x||x|^T, whose
    largest row sum dominates sigma_max(|x|)^2 and hence the squared spectral
    radius. Tight (equal to the radius) when x is nonnegative symmetric.
    """
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionMismatchError(f"spectral bound needs a square matrix, got {x.shape}")
    mags = np.abs(x)
    col_sums = mags.sum(axis=0)
    row_scores = mags @ col_sums
    return float(math.sqrt(float(np.max(row_scores))))


def renormalize_w(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    """Scale each W_k down by the spectral-radius bound of E_k W_k.

    Afterwards every eigenvalue of E_k W_k is at most one, which restores the
    precondition of the weight refresh no matter how far the preceding steps
    overshot. When W_k is already close to the inverse of E_k the bound is
    close to one and the perturbation is minimal.
    """
    new_w = []
    for k in range(config.K):
        e = objective.mse_matrix_scaled(config, channels, state, k)
        eta = eta_spectral_bound(matrix_product(e, state.W[k]))
        if eta <= 0.0:
            raise DegenerateStateError(f"weight matrix {k} collapsed to zero")
        new_w.append(state.W[k] / eta)
    return new_w


def nesterov_gd_steps(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    which: str,
    phi: np.ndarray,
    theta: np.ndarray,
    xi: np.ndarray,
    J: int,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm2",
    outer: int = 0,
    rows: list | None = None,
) -> BeamformerState:
    """J accelerated steps on one block with per-step exact line search.

    Step j:  X <- X + theta_j * Xbar - phi_j * gamma* * grad(X + xi_j * Xbar),
    where Xbar is the previous step's displacement. The displacement buffer
    starts equal to the incoming block (a zero virtual predecessor), and
    gamma* is the exact line-search length from the current iterate along the
    look-ahead gradient. With theta = xi = 0 and phi = 1 this is plain
    gradient descent with exact line search.
    """
    state = state.copy()
    block = state.U if which == "u" else state.V
    momentum = [x.copy() for x in block]
    grad_all = objective.grad_u_all if which == "u" else objective.grad_v_all
    phase = "u-step" if which == "u" else "v-step"
    for j in range(J):
        t0 = time.perf_counter_ns()
        lookahead = [block[k] + xi[j] * momentum[k] for k in range(config.K)]
        grads = grad_all(config, channels, _with_block(state, which, lookahead))
        if objective.stacked_norm(grads) == 0.0:
            gamma = 0.0
        else:
            gamma = optimal_step_length(config, channels, state, grads, which)
        new_block = [
            block[k] + theta[j] * momentum[k] - phi[j] * gamma * grads[k]
            for k in range(config.K)
        ]
        momentum = [new_block[k] - block[k] for k in range(config.K)]
        block = new_block
        if which == "u":
            state.U = block
        else:
            state.V = block
        wall = time.perf_counter_ns() - t0
        if rows is not None:
            row = _algo2_row(config, channels, state, run_id, outer, phase, wall, diagnostics)
            if which == "u":
                row.grad_norm_u = objective.stacked_norm(grads)
            else:
                row.grad_norm_v = objective.stacked_norm(grads)
            rows.append(row)
            if observer is not None:
                observer(row, state)
    return state


def _algo2_row(config, channels, state, run_id, outer, phase, wall, diagnostics,
               with_wsr=False) -> IterationTrace:
    row = IterationTrace(
        run_id=run_id,
        algo="algorithm2",
        iter=outer,
        phase=phase,
        power=total_transmit_power(state.V),
        wall_nanos=wall,
    )
    if diagnostics:
        from . import oracle  # diagnostics-only import; update path never reaches it

        row.f = objective.cost_f(config, channels, state).f_total
        lo, hi = np.inf, -np.inf
        for k in range(config.K):
            e = objective.mse_matrix_scaled(config, channels, state, k)
            vals = oracle.product_eigenvalues(e, state.W[k])
            lo = min(lo, float(vals[0]))
            hi = max(hi, float(vals[-1]))
        row.lambda_min_ew = lo
        row.lambda_max_ew = hi
        if with_wsr:
            row.wsr = objective.rate_and_wsr(config, channels, state.V)[1]
    return row


def run_algorithm2(
    config: SystemConfig,
    channels: ChannelSet,
    params: UnfoldParams,
    *,
    diagnostics: bool = False,
    observer=None,
    run_id: str = "algorithm2",
) -> RunResult:
    """The full forward pass.

    Initialisation: strongest-rows beamformers scaled to the power budget,
    trace-optimal scaled-identity receive filters, weights I / Tr(E_k), then
    J_w warm-start refresh steps so the first filter update sees a useful W.
    Each layer runs [J_u accelerated U steps; W renormalisation; J_w refresh
    steps; J_v accelerated V steps] and ends with a single beamformer rescale
    back to the power budget (no reciprocal filter scaling).
    """
    V = init_v_strongest_rows(config, channels)
    U = init_u_scaled_identity(config, channels, V)
    probe = BeamformerState(U=U, W=[np.eye(config.d, dtype=np.complex128)] * config.K, V=V)
    errors = [objective.mse_matrix_scaled(config, channels, probe, k) for k in range(config.K)]
    state = BeamformerState(U=U, W=init_w_trace_scaled(errors), V=V)

    result = RunResult()
    for _ in range(params.J_w):
        t0 = time.perf_counter_ns()
        state.W = [schulz_update(state.W[k], errors[k]) for k in range(config.K)]
        wall = time.perf_counter_ns() - t0
        row = _algo2_row(config, channels, state, run_id, 0, "w-step", wall, diagnostics)
        result.rows.append(row)
        if observer is not None:
            observer(row, state)

    common = dict(diagnostics=diagnostics, observer=observer, run_id=run_id)
    for outer in range(1, params.L + 1):
        layer = outer - 1
        state = nesterov_gd_steps(
            config, channels, state, "u",
            params.phi_u[layer], params.theta_u[layer], params.xi_u[layer], params.J_u,
            outer=outer, rows=result.rows, **common,
        )

        t0 = time.perf_counter_ns()
        state.W = renormalize_w(config, channels, state)
        wall = time.perf_counter_ns() - t0
        row = _algo2_row(config, channels, state, run_id, outer, "w-step", wall, diagnostics)
        result.rows.append(row)
        if observer is not None:
            observer(row, state)

        errors = [objective.mse_matrix_scaled(config, channels, state, k) for k in range(config.K)]
        for _ in range(params.J_w):
            t0 = time.perf_counter_ns()
            state.W = [schulz_update(state.W[k], errors[k]) for k in range(config.K)]
            wall = time.perf_counter_ns() - t0
            row = _algo2_row(config, channels, state, run_id, outer, "w-step", wall, diagnostics)
            result.rows.append(row)
            if observer is not None:
                observer(row, state)

        state = nesterov_gd_steps(
            config, channels, state, "v",
            params.phi_v[layer], params.theta_v[layer], params.xi_v[layer], params.J_v,
            outer=outer, rows=result.rows, **common,
        )

        t0 = time.perf_counter_ns()
        state.V = scale_to_power(state.V, config.P)
        wall = time.perf_counter_ns() - t0
        row = _algo2_row(config, channels, state, run_id, outer, "scale", wall, diagnostics,
                         with_wsr=True)
        result.rows.append(row)
        if observer is not None:
            observer(row, state)

    result.state = state
    return result

"""Cost function, error matrices, rates, gradients, and perturbation identities.

The minimised objective is

    f(U, W, V) = sum_k alpha_k * ( Tr(W_k E_k) - ln det W_k )

where E_k is the power-normalised error covariance of user k: its noise term
carries the factor sum_m Tr(V_m V_m^H) / P, which is what lets the solvers
work unconstrained and defer the power budget to a scaling step. Rates are
reported in bits per channel use; f is in nats.

Everything here is a pure function of immutable inputs. Only ``cost_f`` and
``rate_and_wsr`` touch the oracle module (for log-determinants); the solver
update paths use the gradients and ``weighted_mse_trace`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracle
from .errors import DimensionMismatchError
from .linalg import (
    Matrix,
    frobenius_norm,
    hermitian_transpose,
    matrix_product,
)
from .system import BeamformerState, ChannelSet, SystemConfig, total_transmit_power

LN2 = math.log(2.0)


@dataclass(frozen=True)
class CostBreakdown:
    """Total cost in nats plus each user's (trace term, log-det term) pair."""

    f_total: float
    per_user: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class PerturbationDiagnostics:
    """Matrix families describing how one gradient step moves each E_k.

    ``A``/``B`` (d x d) give the exact quadratic/linear coefficients of the
    change of E_k under a beamformer (V) step of size gamma_v:

        E_k(after) - E_k(before) = gamma_v * (A_k gamma_v + B_k)

    ``C``/``D`` play the same role for a receive-filter (U) step, assuming the
    beamformers are power-normalised. ``Psi``/``Omega``/``Upsilon`` (N x N)
    are their channel-side building blocks.
    """

    A: tuple[Matrix, ...]
    B: tuple[Matrix, ...]
    C: tuple[Matrix, ...]
    D: tuple[Matrix, ...]
    Psi: tuple[Matrix, ...]
    Omega: tuple[Matrix, ...]
    Upsilon: tuple[Matrix, ...]


def _check_user(config: SystemConfig, k: int) -> None:
    if not 0 <= k < config.K:
        raise DimensionMismatchError(f"user index {k} outside 0..{config.K - 1}")


def _mse_matrix(config, channels, state, k, noise_scale: float) -> Matrix:
    h = channels.H[k]
    u = state.U[k]
    uh = hermitian_transpose(u)
    x = matrix_product(matrix_product(uh, h), state.V[k])
    eye = np.eye(config.d, dtype=np.complex128)
    e = eye - x - hermitian_transpose(x)
    for m in range(config.K):
        t = matrix_product(uh, matrix_product(h, state.V[m]))
        e = e + matrix_product(t, hermitian_transpose(t))
    return e + (noise_scale * config.sigma2) * matrix_product(uh, u)


def mse_matrix_scaled(config: SystemConfig, channels: ChannelSet, state: BeamformerState, k: int) -> Matrix:
    """Error covariance E_k with the power-normalised noise term.

    The noise contribution is (sum_m Tr(V_m V_m^H) / P) * sigma2 * U_k^H U_k,
    so E_k is invariant under the reciprocal scaling (V, U) -> (beta V, U/beta).
    Hermitian PSD by construction.
    """
    _check_user(config, k)
    return _mse_matrix(config, channels, state, k, total_transmit_power(state.V) / config.P)


def mse_matrix_plain(config: SystemConfig, channels: ChannelSet, state: BeamformerState, k: int) -> Matrix:
    """Error covariance with the physical (unscaled) noise term sigma2 * U_k^H U_k."""
    _check_user(config, k)
    return _mse_matrix(config, channels, state, k, 1.0)


def weighted_mse_trace(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> float:
    """sum_k alpha_k Tr(W_k E_k) — the part of the cost that moves during U/V steps.

    The log-det part of the cost is constant in U and V, so line searches and
    gradient checks over those blocks only ever need this term. Oracle-free.
    """
    total = 0.0
    for k in range(config.K):
        e = mse_matrix_scaled(config, channels, state, k)
        total += config.alpha[k] * float(np.trace(matrix_product(state.W[k], e)).real)
    return total


def cost_f(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> CostBreakdown:
    """Full cost f = sum_k alpha_k (Tr(W_k E_k) - ln det W_k), natural log.

    Raises :class:`NotPositiveDefiniteError` when some W_k has an eigenvalue
    at or below 1e-14 (the cost is +infinity there semantically).
    """
    per_user = []
    total = 0.0
    for k in range(config.K):
        e = mse_matrix_scaled(config, channels, state, k)
        trace_term = float(np.trace(matrix_product(state.W[k], e)).real)
        logdet_term = oracle.log_det_hpd(state.W[k])
        per_user.append((trace_term, logdet_term))
        total += config.alpha[k] * (trace_term - logdet_term)
    return CostBreakdown(f_total=total, per_user=tuple(per_user))


def rate_and_wsr(config: SystemConfig, channels: ChannelSet, V: list[Matrix]) -> tuple[list[float], float]:
    """Per-user Shannon rates and their priority-weighted sum, bits per channel use.

    Evaluation-only path: determinants come from the oracle module. The
    interference-plus-noise inverse is folded away with
    det(I + S Q^-1) = det(Q + S) / det(Q), keeping both log-dets Hermitian.
    """
    rates = []
    for k in range(config.K):
        h = channels.H[k]
        noise = config.sigma2 * np.eye(config.N, dtype=np.complex128)
        interference = noise.copy()
        for m in range(config.K):
            if m == k:
                continue
            t = matrix_product(h, V[m])
            interference = interference + matrix_product(t, hermitian_transpose(t))
        t = matrix_product(h, V[k])
        signal = matrix_product(t, hermitian_transpose(t))
        rate = (oracle.log_det_hpd(interference + signal) - oracle.log_det_hpd(interference)) / LN2
        rates.append(rate)
    wsr = float(sum(config.alpha[k] * rates[k] for k in range(config.K)))
    return rates, wsr


def _interference_gram(config, channels, V, k) -> Matrix:
    """sum_m (H_k V_m)(H_k V_m)^H, the received-signal Gram matrix at user k."""
    h = channels.H[k]
    total = np.zeros((config.N, config.N), dtype=np.complex128)
    for m in range(config.K):
        t = matrix_product(h, V[m])
        total = total + matrix_product(t, hermitian_transpose(t))
    return total


def grad_u(config: SystemConfig, channels: ChannelSet, state: BeamformerState, k: int) -> Matrix:
    """Gradient of the cost with respect to U_k (steepest-ascent direction).

    2 alpha_k (sum_m H_k V_m V_m^H H_k^H U_k - H_k V_k) W_k
      + (2 alpha_k sigma2 / P) sum_n Tr(V_n V_n^H) U_k W_k

    The convention is d f = <grad, dU> under the real-embedding inner product,
    so descent steps subtract the returned matrix verbatim.
    """
    _check_user(config, k)
    h = channels.H[k]
    received = _interference_gram(config, channels, state.V, k)
    power = total_transmit_power(state.V)
    core = matrix_product(received, state.U[k]) - matrix_product(h, state.V[k])
    core = core + (config.sigma2 * power / config.P) * state.U[k]
    return 2.0 * config.alpha[k] * matrix_product(core, state.W[k])


def _grad_v_shared(config, channels, state) -> tuple[Matrix, float]:
    """The user-summed pieces of the beamformer gradient.

    Returns (T, c) with T = sum_m alpha_m H_m^H U_m W_m U_m^H H_m and
    c = (sigma2 / P) sum_m alpha_m Tr(W_m U_m^H U_m).
    """
    t_sum = np.zeros((config.M, config.M), dtype=np.complex128)
    c = 0.0
    for m in range(config.K):
        hu = matrix_product(hermitian_transpose(channels.H[m]), state.U[m])
        huw = matrix_product(hu, state.W[m])
        t_sum = t_sum + config.alpha[m] * matrix_product(huw, hermitian_transpose(hu))
        gram_u = matrix_product(hermitian_transpose(state.U[m]), state.U[m])
        c += config.alpha[m] * float(np.trace(matrix_product(state.W[m], gram_u)).real)
    return t_sum, (config.sigma2 / config.P) * c


def grad_v(config: SystemConfig, channels: ChannelSet, state: BeamformerState, k: int) -> Matrix:
    """Gradient of the cost with respect to V_k (same convention as grad_u)."""
    _check_user(config, k)
    t_sum, c = _grad_v_shared(config, channels, state)
    huw = matrix_product(
        matrix_product(hermitian_transpose(channels.H[k]), state.U[k]), state.W[k]
    )
    return 2.0 * (matrix_product(t_sum, state.V[k]) - config.alpha[k] * huw + c * state.V[k])


def grad_u_all(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    return [grad_u(config, channels, state, k) for k in range(config.K)]


def grad_v_all(config: SystemConfig, channels: ChannelSet, state: BeamformerState) -> list[Matrix]:
    """All beamformer gradients, sharing the user-summed pieces across users."""
    t_sum, c = _grad_v_shared(config, channels, state)
    grads = []
    for k in range(config.K):
        huw = matrix_product(
            matrix_product(hermitian_transpose(channels.H[k]), state.U[k]), state.W[k]
        )
        grads.append(
            2.0 * (matrix_product(t_sum, state.V[k]) - config.alpha[k] * huw + c * state.V[k])
        )
    return grads


def stacked_norm(matrices: list[Matrix]) -> float:
    """Frobenius norm of a per-user family viewed as one stacked matrix."""
    return math.sqrt(sum(frobenius_norm(m) ** 2 for m in matrices))


def perturbation_diagnostics(
    config: SystemConfig,
    channels: ChannelSet,
    state: BeamformerState,
    grads_u: list[Matrix],
    grads_v: list[Matrix],
) -> PerturbationDiagnostics:
    """Exact step-perturbation coefficients for the current state and gradients.

    The C/D pair assumes the beamformers are power-normalised (their noise
    factor is then exactly sigma2), which holds everywhere on the production
    path because every beamformer step ends in a rescale.
    """
    if len(grads_u) != config.K or len(grads_v) != config.K:
        raise DimensionMismatchError("need one gradient per user for both blocks")

    # channel-side sums shared by all users
    sum_gg = np.zeros((config.M, config.M), dtype=np.complex128)
    sum_gv = np.zeros((config.M, config.M), dtype=np.complex128)
    trace_gg = 0.0
    trace_gv = 0.0
    for n in range(config.K):
        g = grads_v[n]
        v = state.V[n]
        sum_gg = sum_gg + matrix_product(g, hermitian_transpose(g))
        cross = matrix_product(g, hermitian_transpose(v))
        sum_gv = sum_gv + cross + hermitian_transpose(cross)
        trace_gg += frobenius_norm(g) ** 2
        trace_gv += 2.0 * float(np.trace(cross).real)

    eye_n = np.eye(config.N, dtype=np.complex128)
    A, B, C, D, Psi, Omega, Upsilon = [], [], [], [], [], [], []
    for k in range(config.K):
        h = channels.H[k]
        hh = hermitian_transpose(h)
        u = state.U[k]
        uh = hermitian_transpose(u)

        psi = matrix_product(matrix_product(h, sum_gg), hh)
        psi = psi + (trace_gg * config.sigma2 / config.P) * eye_n
        omega = matrix_product(matrix_product(h, sum_gv), hh)
        omega = omega + (trace_gv * config.sigma2 / config.P) * eye_n
        upsilon = _interference_gram(config, channels, state.V, k)

        a_k = matrix_product(matrix_product(uh, psi), u)
        hv_grad = matrix_product(uh, matrix_product(h, grads_v[k]))
        b_k = hermitian_transpose(hv_grad) + hv_grad - matrix_product(matrix_product(uh, omega), u)

        gu = grads_u[k]
        guh = hermitian_transpose(gu)
        m_k = upsilon + config.sigma2 * eye_n
        c_k = matrix_product(matrix_product(guh, m_k), gu)
        hv = matrix_product(h, state.V[k])
        mixed = matrix_product(hermitian_transpose(hv), gu)
        damp = matrix_product(matrix_product(uh, m_k), gu)
        d_k = mixed + hermitian_transpose(mixed) - damp - hermitian_transpose(damp)

        Psi.append(psi)
        Omega.append(omega)
        Upsilon.append(upsilon)
        A.append(a_k)
        B.append(b_k)
        C.append(c_k)
        D.append(d_k)

    return PerturbationDiagnostics(
        A=tuple(A), B=tuple(B), C=tuple(C), D=tuple(D),
        Psi=tuple(Psi), Omega=tuple(Omega), Upsilon=tuple(Upsilon),
    )

"""Scenario configuration, seeded channel generation, and solver initialisation.

A scenario is a base station with M antennas serving K users, each with N
receive antennas and d data streams, under a total transmit power budget P
and per-antenna noise variance sigma2. Channel entries are i.i.d. circular
complex Gaussian with unit total variance; a given (config, seed) pair always
produces the same channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .errors import DegenerateStateError, DimensionMismatchError, NotPositiveDefiniteError
from .linalg import Matrix, frobenius_norm, hermitian_transpose, matrix_product


@dataclass(frozen=True)
class SystemConfig:
    """Antenna/user/stream counts, power budget, noise variance, user priorities."""

    M: int
    K: int
    N: int
    d: int
    P: float
    sigma2: float
    alpha: tuple[float, ...]

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.N < 1:
            raise ValueError("M, K, N must all be at least 1")
        if not 1 <= self.d <= min(self.M, self.N):
            raise ValueError(f"need 1 <= d <= min(M, N), got d={self.d}")
        if self.P <= 0 or self.sigma2 <= 0:
            raise ValueError("P and sigma2 must be positive")
        if len(self.alpha) != self.K:
            raise ValueError(f"alpha must have K={self.K} entries, got {len(self.alpha)}")
        if any(a <= 0 for a in self.alpha):
            raise ValueError("every user priority must be positive")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))

    @classmethod
    def uniform(cls, M: int, K: int, N: int, d: int, P: float = 10.0, sigma2: float = 1.0):
        """Equal-priority scenario, default 10 dB transmit-SNR."""
        return cls(M=M, K=K, N=N, d=d, P=P, sigma2=sigma2, alpha=(1.0,) * K)

    def to_dict(self) -> dict:
        return {
            "M": self.M, "K": self.K, "N": self.N, "d": self.d,
            "P": self.P, "sigma2": self.sigma2, "alpha": list(self.alpha),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        return cls(
            M=int(data["M"]), K=int(data["K"]), N=int(data["N"]), d=int(data["d"]),
            P=float(data["P"]), sigma2=float(data["sigma2"]),
            alpha=tuple(float(a) for a in data["alpha"]),
        )


@dataclass(frozen=True)
class ChannelSet:
    """Per-user N x M channel matrices plus an upper bound kappa on
    sigma_max(H_k^H H_k) over all users."""

    H: tuple[Matrix, ...]
    kappa: float


@dataclass
class BeamformerState:
    """The triple of per-user receive filters U (N x d), weight matrices
    W (d x d), and transmit beamformers V (M x d)."""

    U: list[Matrix]
    W: list[Matrix]
    V: list[Matrix]

    def copy(self) -> "BeamformerState":
        return BeamformerState(
            U=[u.copy() for u in self.U],
            W=[w.copy() for w in self.W],
            V=[v.copy() for v in self.V],
        )

    def norm(self) -> float:
        """Frobenius norm of the stacked (U, W, V) triple."""
        total = 0.0
        for group in (self.U, self.W, self.V):
            for m in group:
                total += frobenius_norm(m) ** 2
        return math.sqrt(total)

    def validate(self, config: SystemConfig) -> None:
        """Shape and weight-matrix sanity checks; meant for API boundaries and tests."""
        if not (len(self.U) == len(self.W) == len(self.V) == config.K):
            raise DimensionMismatchError("state must carry exactly K matrices per group")
        for k in range(config.K):
            if self.U[k].shape != (config.N, config.d):
                raise DimensionMismatchError(f"U[{k}] has shape {self.U[k].shape}")
            if self.W[k].shape != (config.d, config.d):
                raise DimensionMismatchError(f"W[{k}] has shape {self.W[k].shape}")
            if self.V[k].shape != (config.M, config.d):
                raise DimensionMismatchError(f"V[{k}] has shape {self.V[k].shape}")
            dev = float(np.max(np.abs(self.W[k] - self.W[k].conj().T)))
            if dev > 1e-10:
                raise DimensionMismatchError(f"W[{k}] deviates from Hermitian by {dev:.2e}")


def total_transmit_power(V: list[Matrix]) -> float:
    """Sum over users of Tr(V_k V_k^H)."""
    return float(sum(frobenius_norm(v) ** 2 for v in V))


def scale_to_power(V: list[Matrix], P: float) -> list[Matrix]:
    """Global rescale so the summed transmit power equals P exactly."""
    power = total_transmit_power(V)
    if power <= 0.0:
        raise DegenerateStateError("cannot scale an all-zero beamformer set to power P")
    beta = math.sqrt(P / power)
    return [beta * v for v in V]


def reciprocal_rescale(U: list[Matrix], V: list[Matrix], P: float) -> tuple[list[Matrix], list[Matrix], float]:
    """V <- beta V and U <- U / beta with beta restoring the power budget.

    The error matrices (and therefore the cost) are unchanged by this pair of
    scalings, which is what makes it safe to apply after every beamformer
    gradient step.
    """
    power = total_transmit_power(V)
    if power <= 0.0:
        raise DegenerateStateError("cannot rescale an all-zero beamformer set")
    beta = math.sqrt(P / power)
    return [u / beta for u in U], [beta * v for v in V], beta


def generate_channels(config: SystemConfig, seed: int, kappa_mode: str = "frobenius") -> ChannelSet:
    """K seeded Rayleigh channel draws with unit-variance circular entries.

    Real and imaginary parts are independent Normal(0, 1/2). The draw order
    (per user: real block then imaginary block) is part of the reproducibility
    contract.
    """
    rng = np.random.default_rng(seed)
    scale = math.sqrt(0.5)
    H = []
    for _ in range(config.K):
        re = rng.standard_normal((config.N, config.M))
        im = rng.standard_normal((config.N, config.M))
        h = scale * (re + 1j * im)
        h.flags.writeable = False
        H.append(h)
    return ChannelSet(H=tuple(H), kappa=compute_kappa(H, kappa_mode))


def compute_kappa(H, mode: str = "frobenius") -> float:
    """Upper bound on sigma_max(H_k^H H_k) over all users.

    ``frobenius`` returns max_k ||H_k^H H_k||_F (cheap, always valid);
    ``oracle`` returns the exact maximum padded by a factor (1 + 1e-9).
    """
    if mode == "frobenius":
        return max(frobenius_norm(matrix_product(hermitian_transpose(h), h)) for h in H)
    if mode == "oracle":
        top = max(
            oracle.max_singular_value(matrix_product(hermitian_transpose(h), h)) for h in H
        )
        return top * (1.0 + 1e-9)
    raise ValueError(f"unknown kappa mode {mode!r}")


def init_v_strongest_rows(config: SystemConfig, channels: ChannelSet) -> list[Matrix]:
    """V_k from the d strongest rows of H_k, then scaled to the power budget.

    The d rows with the largest squared norms are kept (ties broken by lower
    row index) and stacked in index order; V_k is the conjugate transpose of
    that submatrix.
    """
    if config.d > config.N:
        raise DimensionMismatchError("strongest-rows init needs d <= N")
    V = []
    for h in channels.H:
        row_power = np.sum(h.real**2 + h.imag**2, axis=1)
        # stable sort on (-power, index); keep the selected rows in index order
        order = sorted(range(config.N), key=lambda i: (-row_power[i], i))[: config.d]
        picked = h[sorted(order), :]
        V.append(np.ascontiguousarray(hermitian_transpose(picked)))
    return scale_to_power(V, config.P)


def init_state_algorithm1(config: SystemConfig, channels: ChannelSet) -> BeamformerState:
    """Zero receive filters, identity weights, strongest-rows beamformers.

    With U = 0 the error matrix of every user is the identity, so the initial
    eigenvalues of E_k W_k are all exactly one — the starting condition the
    step-capped solver's guarantees rest on.
    """
    V = init_v_strongest_rows(config, channels)
    U = [np.zeros((config.N, config.d), dtype=np.complex128) for _ in range(config.K)]
    W = [np.eye(config.d, dtype=np.complex128) for _ in range(config.K)]
    return BeamformerState(U=U, W=W, V=V)


def init_u_scaled_identity(config: SystemConfig, channels: ChannelSet, V: list[Matrix]) -> list[Matrix]:
    """U_k = rho_k * J with J the N x d rectangular identity.

    rho_k is the real scalar minimising Tr(E_k(rho J, V)), which is an exact
    quadratic a rho^2 - 2 b rho + c with a > 0 whenever any beamformer is
    nonzero; for an all-zero V the quadratic degenerates and rho = 0 is
    returned.
    """
    rect_eye = np.eye(config.N, config.d, dtype=np.complex128)
    power = total_transmit_power(V)
    U = []
    for k in range(config.K):
        h = channels.H[k]
        gains = [matrix_product(matrix_product(hermitian_transpose(rect_eye), h), V[m])
                 for m in range(config.K)]
        a = sum(frobenius_norm(g) ** 2 for g in gains)
        a += (power / config.P) * config.sigma2 * config.d
        b = float(np.trace(gains[k]).real)
        rho = 0.0 if a <= 0.0 else b / a
        U.append(rho * rect_eye)
    return U


def init_w_trace_scaled(E: list[Matrix]) -> list[Matrix]:
    """W_k = I / Tr(E_k), one trace per user."""
    W = []
    for e in E:
        t = float(np.trace(e).real)
        if t <= 0.0:
            raise NotPositiveDefiniteError(f"error-matrix trace {t:.3e} is not positive")
        W.append(np.eye(e.shape[0], dtype=np.complex128) / t)
    return W

"""Diagnostic numerical oracles: eigenvalues, explicit inverses, log-dets.

These routines exist for tests, rate evaluation, and trace diagnostics. The
solver update paths never call into this module; a call-counting test holds
the unfolded forward pass to that.

Eigenvalues are computed by cyclic Jacobi rotations on the real-symmetric
embedding ``[[Re, -Im], [Im, Re]]`` of a Hermitian matrix. Each eigenvalue of
the complex matrix shows up twice in the embedding and is deduplicated by
taking every second sorted value. For the small (dimension <= 8) matrices in
this domain the plain cyclic sweep is accurate and fast enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailureError,
    DimensionMismatchError,
    NonHermitianError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)
from .linalg import Matrix, frobenius_norm

MAX_SWEEPS = 50
HERMITIAN_TOL = 1e-10
PIVOT_TOL = 1e-14
INVERSE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues in ascending order plus the terminal off-diagonal residual."""

    eigenvalues: np.ndarray
    residual: float


def _require_square(a: Matrix, what: str) -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{what} needs a square matrix, got {a.shape}")
    return a.shape[0]


def _require_hermitian(a: Matrix, tol: float = HERMITIAN_TOL) -> None:
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > tol:
        raise NonHermitianError(f"matrix deviates from Hermitian by {dev:.3e} (tol {tol:.1e})")


def real_symmetric_embedding(a: Matrix) -> np.ndarray:
    """The 2n x 2n real-symmetric image ``[[Re, -Im], [Im, Re]]`` of Hermitian ``a``."""
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def _jacobi_offdiag_max(a: list[list[float]], n: int) -> float:
    off = 0.0
    for p in range(n - 1):
        row = a[p]
        for q in range(p + 1, n):
            v = row[q]
            if v < 0.0:
                v = -v
            if v > off:
                off = v
    return off


def _jacobi_eigenvalues(s: np.ndarray, tol: float) -> tuple[np.ndarray, float]:
    """Cyclic Jacobi sweeps on a real symmetric matrix; plain-float inner loops."""
    n = s.shape[0]
    a = [[float(v) for v in row] for row in s]
    for _ in range(MAX_SWEEPS):
        off = _jacobi_offdiag_max(a, n)
        if off <= tol:
            return np.sort(np.array([a[i][i] for i in range(n)])), off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                tau = (a[q][q] - a[p][p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                ap, aq = a[p], a[q]
                for i in range(n):
                    vp, vq = ap[i], aq[i]
                    ap[i] = c * vp - sn * vq
                    aq[i] = sn * vp + c * vq
                for row in a:
                    vp, vq = row[p], row[q]
                    row[p] = c * vp - sn * vq
                    row[q] = sn * vp + c * vq
    off = _jacobi_offdiag_max(a, n)
    raise ConvergenceFailureError(
        f"Jacobi sweep budget of {MAX_SWEEPS} exhausted on a {n}x{n} matrix", off
    )


def _default_eigen_tol(a: Matrix) -> float:
    return 1e-12 * max(1.0, frobenius_norm(a))


def hermitian_eigenvalues(a: Matrix, tol: float | None = None) -> EigenResult:
    """All eigenvalues of a Hermitian matrix, ascending.

    ``tol`` is the absolute cap on the largest off-diagonal magnitude at
    termination; it defaults to ``1e-12 * max(1, ||a||_F)``.
    """
    n = _require_square(a, "hermitian_eigenvalues")
    _require_hermitian(a)
    if tol is None:
        tol = _default_eigen_tol(a)
    if n == 0:
        return EigenResult(np.array([]), 0.0)
    values, residual = _jacobi_eigenvalues(real_symmetric_embedding(a), tol)
    return EigenResult(values[::2].copy(), residual)


def explicit_inverse(a: Matrix) -> Matrix:
    """Gauss-Jordan inverse with partial pivoting.

    Raises :class:`SingularMatrixError` if a pivot falls below ``1e-14`` and
    :class:`ConvergenceFailureError` if the residual ``||A A^-1 - I||_F``
    exceeds ``1e-8 * dim`` (severe ill-conditioning).
    """
    n = _require_square(a, "explicit_inverse")
    m = np.hstack([a.astype(np.complex128), np.eye(n, dtype=np.complex128)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[piv, col]) < PIVOT_TOL:
            raise SingularMatrixError(f"pivot {abs(m[piv, col]):.3e} below {PIVOT_TOL:.1e}")
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
        m[col] = m[col] / m[col, col]
        for r in range(n):
            if r != col and m[r, col] != 0.0:
                m[r] = m[r] - m[r, col] * m[col]
    inv = np.ascontiguousarray(m[:, n:])
    residual = frobenius_norm(np.einsum("ik,kj->ij", a, inv) - np.eye(n))
    if residual > INVERSE_RESIDUAL_TOL * n:
        raise ConvergenceFailureError(f"inverse residual check failed for {n}x{n} matrix", residual)
    return inv


def log_det_hpd(a: Matrix) -> float:
    """Natural-log determinant of a Hermitian positive definite matrix.

    Computed as the sum of natural logs of the Jacobi eigenvalues; an
    eigenvalue at or below ``1e-14`` raises :class:`NotPositiveDefiniteError`.
    """
    result = hermitian_eigenvalues(a)
    if result.eigenvalues.size and result.eigenvalues[0] <= 1e-14:
        raise NotPositiveDefiniteError(
            f"smallest eigenvalue {result.eigenvalues[0]:.3e} is not positive"
        )
    return float(np.sum(np.log(result.eigenvalues)))


def max_singular_value(a: Matrix, tol: float | None = None) -> float:
    """Largest singular value, via the eigenvalues of ``a^H a``."""
    gram = np.einsum("ik,kj->ij", a.conj().T, a)
    top = hermitian_eigenvalues(gram, tol).eigenvalues[-1]
    return float(math.sqrt(max(top, 0.0)))


def _cholesky(a: Matrix) -> Matrix:
    """Lower-triangular Cholesky factor of a Hermitian positive definite matrix."""
    n = _require_square(a, "_cholesky")
    low = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        s = a[j, j].real - float(np.sum(low[j, :j].real ** 2 + low[j, :j].imag ** 2))
        if s <= 0.0:
            raise NotPositiveDefiniteError(f"Cholesky failed at column {j} (value {s:.3e})")
        low[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            v = a[i, j] - np.sum(low[i, :j] * low[j, :j].conj())
            low[i, j] = v / low[j, j]
    return low


def product_eigenvalues(e: Matrix, w: Matrix, tol: float | None = None) -> np.ndarray:
    """Eigenvalues of ``e @ w`` for Hermitian positive definite ``e`` and Hermitian ``w``.

    ``e @ w`` is not Hermitian, but with ``e = L L^H`` it is similar to the
    Hermitian matrix ``L^H w L``, whose (real) spectrum is returned ascending.
    Used by trace diagnostics and the eigenvalue-range tests.
    """
    if e.shape != w.shape:
        raise DimensionMismatchError(f"shape mismatch {e.shape} vs {w.shape}")
    low = _cholesky(e)
    sim = np.einsum("ik,kj->ij", np.einsum("ik,kj->ij", low.conj().T, w), low)
    sim = 0.5 * (sim + sim.conj().T)
    return hermitian_eigenvalues(sim, tol).eigenvalues

"""Dense complex-matrix kernels for the production solver path.

All matrices are two-dimensional ``numpy`` arrays of ``complex128``. Products
accumulate over the inner dimension in ascending order (the ``einsum``
sum-of-products path), so repeated runs are bit-identical — golden-trace
regression tests depend on this. Operations return fresh arrays; inputs are
never modified.

Inverses, eigenvalues, and factorizations are deliberately not provided here;
the diagnostic routes live in :mod:`beamsolve.oracle` and are kept off the
solver update path.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError

Matrix = np.ndarray


def as_matrix(entries) -> Matrix:
    """Validated complex matrix from nested sequences or an array.

    Rejects anything that is not 2-D or contains non-finite entries. The
    returned array is a fresh read-only ``complex128`` copy.
    """
    a = np.array(entries, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError("matrix entries must be finite")
    a.flags.writeable = False
    return a


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.complex128)


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.complex128)


def matrix_product(a: Matrix, b: Matrix) -> Matrix:
    """Product ``a @ b`` with fixed ascending-inner-index accumulation."""
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return np.einsum("ik,kj->ij", a, b)


def hermitian_transpose(a: Matrix) -> Matrix:
    """Conjugate transpose, returned as a fresh contiguous array."""
    return np.ascontiguousarray(a.conj().T)


def trace(a: Matrix) -> complex:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"trace needs a square matrix, got {a.shape}")
    return complex(np.trace(a))


def frobenius_norm(a: Matrix) -> float:
    return float(np.sqrt(np.sum(a.real * a.real + a.imag * a.imag)))


def scaled_sum(alpha: complex, a: Matrix, beta: complex, b: Matrix) -> Matrix:
    """Entrywise ``alpha*a + beta*b``."""
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return alpha * a + beta * b

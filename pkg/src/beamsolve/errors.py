"""Exception types shared across the package."""


class BeamsolveError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(BeamsolveError, ValueError):
    """Operands have incompatible or unexpected shapes."""


class NonHermitianError(BeamsolveError, ValueError):
    """A matrix required to be Hermitian is not (beyond tolerance)."""


class SingularMatrixError(BeamsolveError, ArithmeticError):
    """Elimination hit a pivot too small to divide by."""


class NotPositiveDefiniteError(BeamsolveError, ArithmeticError):
    """A matrix required to be positive definite has a non-positive eigenvalue."""


class DegenerateStateError(BeamsolveError, RuntimeError):
    """The solver state collapsed (all-zero beamformers, zero weight, ...)."""


class ConvergenceFailureError(BeamsolveError, RuntimeError):
    """An iterative routine exhausted its iteration budget.

    Carries the terminal residual so callers can decide whether the partial
    result is still usable.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class ConfigError(BeamsolveError, ValueError):
    """An experiment configuration failed validation.

    ``line`` is the 1-based line in the source JSON closest to the offending
    key, when it could be located.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

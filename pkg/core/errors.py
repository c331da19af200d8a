"""Error types for RLCk MOR."""
from typing import List, Optional, Sequence


class MorError(Exception):
    """Base class for every error raised by the reduction toolkit."""
    exit_code = 1


class ValidationError(MorError):
    """Bad input data or configuration."""
    exit_code = 2


class NetlistSyntaxError(ValidationError):
    """Malformed netlist line."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class NumericalError(MorError):
    """Singular, unstable or otherwise numerically unusable model."""
    exit_code = 3


class SingularMatrixError(NumericalError):
    """A matrix or pencil could not be factorized."""

    def __init__(self, message: str, operator: Optional[str] = None,
                 frequency: Optional[float] = None):
        self.operator = operator
        self.frequency = frequency
        super().__init__(message)


class StabilityError(NumericalError):
    """System matrix has eigenvalues on or right of the imaginary axis."""

    def __init__(self, message: str, eigenvalues: Sequence[complex] = ()):
        self.eigenvalues: List[complex] = list(eigenvalues)
        super().__init__(message)


class LyapunovSolvabilityError(NumericalError):
    """Some pair of eigenvalues sums to (numerically) zero."""

    def __init__(self, message: str, min_eigen_sum: float):
        self.min_eigen_sum = min_eigen_sum
        super().__init__(message)


class RankError(NumericalError):
    """Requested order exceeds the numerical rank of the Gramian product."""

    def __init__(self, message: str, max_order: int):
        self.max_order = max_order
        super().__init__(message)


class EmptyBasisError(NumericalError):
    """Every column was deflated during orthogonalization."""

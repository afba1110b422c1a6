"""
Exception hierarchy. Every error carries the process exit code the command
line interface maps it to, and a short kind used in the stderr prefix.
"""

from typing import Optional


class HomogError(Exception):
    """Base class for all errors raised by the package"""

    exit_code = 1
    kind = 'error'


class ValidationError(HomogError):
    """Bad parameters, configuration or input files"""

    exit_code = 2
    kind = 'validation'


class SingularMatrixError(ValidationError):
    kind = 'singular-matrix'


class DegenerateContrastError(SingularMatrixError):
    """The two transversal phase blocks cannot be told apart"""

    kind = 'degenerate-contrast'


class ResolutionError(ValidationError):
    kind = 'under-resolved'


class IncompatibleGridError(ValidationError):
    kind = 'incompatible-grid'


class SolverError(HomogError):
    """An iterative linear or eigenvalue solve did not converge"""

    exit_code = 3
    kind = 'solver'

    def __init__(
        self,
        message: str,
        residual: Optional[float] = None,
        iterations: Optional[int] = None,
    ):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AcceptanceError(HomogError):
    """A verified invariant does not hold"""

    exit_code = 4
    kind = 'acceptance'

    def __init__(self, invariant: str, message: str):
        super().__init__(f'{invariant}: {message}')
        self.invariant = invariant

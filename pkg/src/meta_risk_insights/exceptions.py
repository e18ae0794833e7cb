"""Copyright (c) 2023, Aydin Abdi.

Exceptions raised by the meta-risk-insights package.
"""

from typing import Optional


class MetaRiskError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(MetaRiskError):
    """Raised when study data or a configuration is malformed."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        """Raised when study data or a configuration is malformed.

        Args:
            message: Description of the problem.
            line: Line number of the offending CSV row, if any.
        """
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedInputError(MetaRiskError):
    """Raised when an operation needs at least two distinct uncertainties."""


class InvalidForNError(MetaRiskError):
    """Raised when a rule or formula is undefined for the number of studies."""


class NumericalFailureError(MetaRiskError):
    """Raised when a numerical kernel cannot produce a trustworthy value."""


class NonConvergenceError(NumericalFailureError):
    """Raised when an iteration exhausts its budget."""

    def __init__(self, message: str, last_iterate: float, iterations: int) -> None:
        """Raised when an iteration exhausts its budget.

        Args:
            message: Description of the problem.
            last_iterate: Value reached by the last iteration.
            iterations: Number of iterations performed.
        """
        super().__init__(
            f"{message} (last iterate {last_iterate!r} after {iterations} iterations)"
        )
        self.last_iterate = last_iterate
        self.iterations = iterations

"""
Exception hierarchy for QuenchLab.
The CLI maps these onto exit codes (see src/main.py).
"""

from typing import Optional


class QuenchLabError(Exception):
    """Base class for all QuenchLab errors"""


class ValidationError(QuenchLabError, ValueError):
    """Input violates a hypothesis or a descriptor invariant"""

    def __init__(self, message: str, hypothesis: Optional[str] = None):
        super().__init__(message)
        self.hypothesis = hypothesis


class ConfigError(ValidationError):
    """Scenario file does not match the expected schema"""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        hypothesis: str = "config-schema"
    ):
        location = ""
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(f"{location}{message}", hypothesis=hypothesis)
        self.path = path
        self.line = line


class NumericalError(QuenchLabError, RuntimeError):
    """A solver could not produce a usable result"""


class EigenSolveError(NumericalError):
    """Inverse iteration failed to converge or the factorization broke down"""


class StepRejected(NumericalError):
    """IMEX step produced nonfinite values"""


class SandwichFailure(QuenchLabError):
    """Numerical blow-up time fell outside the theoretical bounds"""

"""Exception types shared across the package."""


class CertificationError(Exception):
    """Base class for every error raised by povmcert."""


class DomainError(CertificationError, ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class InvalidInput(CertificationError, ValueError):
    """Input object fails validation (e.g. an incomplete POVM)."""


class SingularConfiguration(CertificationError, ArithmeticError):
    pass


class IncompleteData(CertificationError, KeyError):
    """A correlation or expectation value needed by the computation is missing."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class FitError(CertificationError):
    pass


class DegenerateDecomposition(DomainError):
    pass


class NotApplicable(CertificationError):
    """The closed form requested does not apply to this POVM."""


class LevelTooLow(CertificationError):
    """A polynomial references a moment absent from the moment matrix."""


class SolverError(CertificationError):
    """Raised by high-level certification calls when an SDP solve fails."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleConstraints(SolverError):
    """The constraint targets admit no moment matrix at the requested level."""

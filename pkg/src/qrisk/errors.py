"""Exception hierarchy.

Validation problems (bad shapes, bad probabilities, cone violations) derive
from :class:`ValidationError`; numerical failures derive from
:class:`ComputationError`. The command line maps the two families to
different exit codes.
"""


class QRiskError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(QRiskError, ValueError):
    """Input does not satisfy a documented invariant."""


class ShapeError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConeMembershipError(ValidationError):
    pass


class UnsupportedSetError(ValidationError):
    pass


class ComputationError(QRiskError, ArithmeticError):
    """A numerical routine could not produce a trustworthy value."""


class ConvergenceError(ComputationError):
    pass


class PreconditionError(ComputationError):
    """A hypothesis needed for a formula could not be confirmed."""


class ContractViolation(ComputationError):
    """A caller-supplied function broke its declared contract."""


class SolverError(ComputationError):
    pass


class NoSolutionError(ComputationError):
    pass


class ClosedFormUnavailable(ComputationError):
    pass


class UndefinedValueError(ComputationError):
    """Raised for penalty values at an infinite level with a zero functional.

    Those values have no agreed convention, so they are reported as undefined
    instead of being guessed.
    """

"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`GenFracError`.
The CLI maps :class:`ValidationError` subclasses to exit code 2,
:class:`NumericalError` subclasses to exit code 3 and
:class:`HypothesisViolationError` to exit code 4.
"""


class GenFracError(Exception):
    """Base class of all library errors."""


class ValidationError(GenFracError, ValueError):
    """Bad input: malformed configuration, wrong domain, unknown names."""


class InvalidDomainError(ValidationError):
    pass


class ExpressionError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class PreconditionError(ValidationError):
    pass


class ModeError(ValidationError):
    pass


class InconsistentDataError(ValidationError):
    pass


class OutOfDomainError(ValidationError):
    """Kernel evaluated where it is not defined (e.g. on a singular diagonal)."""


class NumericalError(GenFracError, ArithmeticError):
    """A computation failed or produced unusable numbers."""


class PoleError(NumericalError):
    pass


class TruncationError(NumericalError):
    def __init__(self, message: str, last_term: float = float("nan")) -> None:
        super().__init__(message)
        self.last_term = last_term


class QuadratureError(NumericalError):
    pass


class NotIntegrableError(NumericalError):
    pass


class NotSquareIntegrableError(NumericalError):
    pass


class NumericalOverflowError(NumericalError):
    pass


class DerivativeBlowupError(NumericalError):
    pass


class NonInvertibleError(NumericalError):
    pass


class StalledError(NumericalError):
    """Line search could not find a descent step."""


class HypothesisViolationError(GenFracError):
    """The hypotheses of an identity or theorem are not met."""


class AbnormalCaseError(HypothesisViolationError):
    """The constraint has a vanishing variation along the iterates."""

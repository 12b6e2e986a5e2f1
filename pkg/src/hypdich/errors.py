"""Exception hierarchy shared by all modules."""


class HypdichError(Exception):
    """Base class for errors raised by this package."""


class ExprError(HypdichError):
    """Problem with a coefficient expression (syntax or evaluation)."""


class ExprSyntaxError(ExprError):
    """Malformed expression source; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class MissingVariableError(ExprError):
    """Expression referenced a variable absent from the evaluation env."""


class DomainError(ExprError):
    """Evaluation left the real domain (sqrt of negative, division by
    zero, non-finite result)."""


class SpecValidationError(HypdichError):
    """ProblemSpec or run configuration is structurally invalid."""


class NumericalError(HypdichError):
    """A numerical procedure failed (CFL violation, non-finite values,
    singular periodic system, lost dichotomy)."""


class TracingError(NumericalError):
    """Characteristic tracing hit an invalid speed or step overflow."""


class DichotomyError(NumericalError):
    """No numerical dichotomy where one is required."""


class EnumerationLimitError(HypdichError):
    """Requested combinatorial enumeration is too large."""

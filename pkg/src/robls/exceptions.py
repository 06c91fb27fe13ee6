class RoblsError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(RoblsError, ValueError):
    """An argument violates an operation's precondition."""


class ConstructionError(InvalidInputError):
    """Distribution parameters are inadmissible."""


class DegenerateDataError(InvalidInputError):
    """The sample cannot support a scale estimate (all values identical)."""


class NumericalUnderflowError(RoblsError, ArithmeticError):
    """A quadrature lost all of its mass to underflow."""

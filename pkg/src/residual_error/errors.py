"""Exception hierarchy.

``ValidationError`` covers bad inputs and configuration (CLI exit code 1);
every other ``ResidualErrorBaseError`` is a runtime failure (exit code 2).
"""


class ResidualErrorBaseError(Exception):
    """Root of all errors raised by this package."""


class ValidationError(ResidualErrorBaseError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class ConsistencyError(ValidationError):
    pass


class NumericDivergenceError(ResidualErrorBaseError, ArithmeticError):
    pass


class FormatError(ResidualErrorBaseError):
    pass


class ChecksumError(FormatError):
    pass


class FrozenWeightsError(ResidualErrorBaseError, RuntimeError):
    pass

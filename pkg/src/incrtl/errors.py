"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit 2),
numerical failures from :class:`NumericalError` (CLI exit 1).
"""


class IncrtlError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(IncrtlError, ValueError):
    pass


class NumericalError(IncrtlError, ArithmeticError):
    pass


class RankDeficient(NumericalError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DegenerateDoF(ValidationError):
    """Residual degrees of freedom ``n - d`` are not positive."""


class Underdetermined(DegenerateDoF):
    pass


class InvalidSpec(ValidationError):
    pass


class UnknownParam(InvalidSpec):
    pass


class IoError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, row: int, column: str, value: str = ""):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} as a number at row {row}, column {column!r}")


class EmptyDataset(ValidationError):
    pass


class TooManyFeatures(ValidationError):
    pass


class InsufficientRows(ValidationError):
    def __init__(self, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(f"split needs {needed} rows but only {available} are available")


class TooFewPairs(ValidationError):
    pass


class ReplicateError(IncrtlError):
    """An estimator failure inside a Monte Carlo replicate."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"replicate {index}: {cause}")

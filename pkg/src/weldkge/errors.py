"""Exception hierarchy shared by the pipeline stages.

The CLI maps :class:`DataError` to exit code 3 and :class:`NumericError`
to exit code 4.
"""


class WeldKGEError(Exception):
    """Base class for all package errors."""


class DataError(WeldKGEError, ValueError):
    """Malformed, inconsistent or missing input data."""


class SchemaError(DataError):
    """A column schema or table does not satisfy its invariants."""


class NumericError(WeldKGEError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

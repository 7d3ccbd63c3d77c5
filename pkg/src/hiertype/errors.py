"""Exception hierarchy shared across the package.

DataError subclasses signal bad user input (files, configs, ids) and map to
CLI exit code 3. InternalError subclasses signal broken invariants inside the
library and map to exit code 4.
"""


class HierTypeError(Exception):
    """Base class for all package errors."""


class DataError(HierTypeError):
    """Invalid input data or configuration."""


class InternalError(HierTypeError):
    """Violated internal invariant; indicates a bug, not bad input."""


class CycleError(DataError):
    """Adding an edge would close a cycle in the ontology."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path or []


class UnknownConcept(DataError):
    """Referenced concept id or name is not registered."""


class Degenerate(DataError):
    """Negative link sampling cannot succeed on this ontology."""


class ParseError(DataError):
    """A record in an input file failed to parse."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SpanError(DataError):
    """Mention span indices are out of bounds or empty."""


class DimensionError(DataError):
    """Embedding row width does not match the configured dimension."""


class ConfigError(DataError):
    """Inconsistent or unknown training configuration."""


class GoldMissing(DataError):
    """Gold entity absent from the candidate set at training time."""


class ShapeError(InternalError):
    """Tensor operands have incompatible shapes."""


class LengthMismatch(InternalError):
    """Paired prediction/gold sequences differ in length."""


class EmptyMask(InternalError):
    """No scorable types survive the leaf mask."""

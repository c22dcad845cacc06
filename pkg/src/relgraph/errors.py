"""Exception hierarchy shared by all relgraph stages.

Every error raised on a user input path derives from :class:`RelgraphError`
and, where a source location is known, carries ``line``/``col`` so front ends
can point at the offending span.
"""

from __future__ import annotations


class RelgraphError(Exception):
    """Base class for all errors raised by relgraph."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


# --- program text ---------------------------------------------------------

class ParseError(RelgraphError):
    """Malformed program text; carries the expected-token set."""

    def __init__(self, message, line=None, col=None, expected=()):
        self.expected = frozenset(expected)
        if self.expected:
            message = f"{message} (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(message, line, col)


class ValidationError(RelgraphError):
    pass


class UndeclaredPredicateError(ValidationError):
    pass


class TypeMismatchError(ValidationError):
    pass


class UnboundHeadVariableError(ValidationError):
    pass


class ClosedHeadRelationError(ValidationError):
    pass


class NegatedWeightedHeadError(ValidationError):
    pass


class DuplicateDeclarationError(ValidationError):
    pass


class DuplicateTemplateError(ValidationError):
    pass


class UnsafeVariableError(ValidationError):
    pass


# --- data loading ---------------------------------------------------------

class DataError(RelgraphError):
    pass


class MissingFileError(DataError):
    pass


class ArityError(DataError):
    pass


class UnknownConstantError(DataError):
    pass


class DimensionError(DataError):
    pass


class DuplicateRowError(DataError):
    pass


# --- grounding ------------------------------------------------------------

class GroundingExplosionError(RelgraphError):
    pass


class InfeasibleConstantError(RelgraphError):
    pass


# --- autodiff -------------------------------------------------------------

class ShapeMismatchError(RelgraphError):
    pass


class NonScalarRootError(RelgraphError):
    pass


# --- scorers --------------------------------------------------------------

class MissingSpecError(RelgraphError):
    pass


class DimMismatchError(RelgraphError):
    pass


class MissingFeatureError(RelgraphError):
    pass


# --- inference ------------------------------------------------------------

class InfeasibleError(RelgraphError):
    pass


class TooLargeError(RelgraphError):
    pass


# --- learning -------------------------------------------------------------

class MissingGoldError(RelgraphError):
    pass


class AlignmentError(RelgraphError):
    pass

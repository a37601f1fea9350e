"""Exception types raised across the engine.

Every error the package raises deliberately derives from ProbsheetError so
callers (notably the command line driver) can distinguish modelling problems
from genuine bugs.  Errors raised while evaluating a cell are annotated with
the cell name where possible.
"""

from __future__ import annotations


class ProbsheetError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
        # Filled in by the evaluator when an error surfaces inside a cell.
        self.cell: str | None = None

    def __str__(self) -> str:
        if self.cell is not None:
            return f"in cell {self.cell}: {self.message}"
        return self.message


# --- formula language ------------------------------------------------------

class FormulaError(ProbsheetError):
    """Base class for lexing/parsing problems in a single cell formula."""


class LexError(FormulaError):
    """Unrecognized or malformed input at a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ParseError(FormulaError):
    """Token stream does not match the formula grammar."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)
        self.offset = offset


class ArityError(FormulaError):
    """An operator or named function was applied to the wrong number of arguments."""

    def __init__(self, name: str, detail: str, offset: int | None = None):
        msg = f"{name}: {detail}"
        if offset is not None:
            msg = f"{msg} (offset {offset})"
        super().__init__(msg)
        self.name = name
        self.offset = offset


class ActualDatumError(FormulaError):
    """The recorded datum of an ACTUAL(...) call was not a numeric literal."""


# --- sheet structure -------------------------------------------------------

class CellSyntaxError(ProbsheetError):
    """A cell's text failed to parse while loading a sheet document."""

    def __init__(self, cell: str, cause: FormulaError):
        super().__init__(str(cause))
        self.cell = cell
        self.cause = cause


class DanglingRefError(ProbsheetError):
    """A formula references a cell that does not exist in the sheet."""

    def __init__(self, referenced: str, referencing: str):
        super().__init__(
            f"cell {referencing} references {referenced}, which is not in the sheet"
        )
        self.referenced = referenced
        self.referencing = referencing


class CycleError(ProbsheetError):
    """The dependency graph contains a cycle; carries one witness path."""

    def __init__(self, cycle: list):
        path = " -> ".join(str(c) for c in cycle)
        super().__init__(f"circular reference: {path}")
        self.cycle = cycle


# --- distributions ---------------------------------------------------------

class ParamError(ProbsheetError):
    """Distribution parameters violate an invariant (e.g. non-positive scale)."""


class DimensionError(ProbsheetError):
    """A parameter vector has the wrong length for its family."""


class SupportError(ProbsheetError):
    """A value lies outside the support of the distribution being queried."""


class DomainError(ProbsheetError):
    """A numeric argument is outside the mathematical domain of an operation."""


# --- black-box operator registry ------------------------------------------

class DuplicateNameError(ProbsheetError):
    """An operator with this name is already registered."""


class ReservedNameError(ProbsheetError):
    """The requested operator name collides with a built-in language name."""


class UnknownOpError(ProbsheetError):
    """A formula calls a named operator that is not in the registry."""


class NoRootError(ProbsheetError):
    """Root search failed: the scanned range contains no sign change."""


# --- evaluation ------------------------------------------------------------

class EvalError(ProbsheetError):
    """Arithmetic failure while applying a primitive operator."""


class UnboundRefError(ProbsheetError):
    """A formula read a cell that has not been evaluated yet."""

    def __init__(self, ref: str):
        super().__init__(f"reference to unbound cell {ref}")
        self.ref = ref


class AlreadyBoundError(ProbsheetError):
    """A cell was evaluated twice within one pass."""


# --- inference -------------------------------------------------------------

class ConfigError(ProbsheetError):
    """An engine configuration value is out of range or inconsistent."""


class AllZeroWeightsError(ProbsheetError):
    """Every particle weight vanished: the observations have zero likelihood."""


class UnboundTargetError(ProbsheetError):
    """A requested report cell does not appear in the particle databases."""


class UnsupportedModelError(ProbsheetError):
    """The model shape cannot be handled by the requested engine."""


class GradientUnavailableError(ProbsheetError):
    """Gradient information was destroyed by a stochastic black-box operator."""

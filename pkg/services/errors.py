"""
Exception hierarchy for the reversibility toolkit.

Every error carries an ``exit_code`` so the command line front end can map
failures onto the documented process exit codes without inspecting messages.
"""

from typing import Optional


class ReversibilityError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


# Configuration family (exit code 2)

class ConfigError(ReversibilityError):
    """Scenario document could not be parsed or failed validation."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None
    ):
        self.field = field
        self.line = line
        self.column = column
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}, column {column}")
        prefix = f"[{'; '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


# Precondition family (exit code 3)

class PreconditionError(ReversibilityError):
    """An operation was called outside its documented domain."""

    exit_code = 3


class DimensionError(PreconditionError):
    """Operands live on Hilbert spaces of different dimension."""


class HermiticityError(PreconditionError):
    """Matrix expected to be Hermitian is not."""


class UnitarityError(PreconditionError):
    """Matrix expected to be unitary is not."""


class BranchAmbiguityError(PreconditionError):
    """An eigenphase sits on the branch cut of the principal logarithm."""


class ObservableError(PreconditionError):
    """Projector family violates the PVM axioms."""


class LabelError(PreconditionError):
    """Outcome label outside {0, ..., m}."""


class ZeroBornWeightError(PreconditionError):
    """Collapse requested onto an outcome of zero Born weight."""


class AdmissibilityError(PreconditionError):
    """A choice rule returned a label of zero Born weight."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (at step {step})"
        super().__init__(message)


class TimeOrderError(PreconditionError):
    """Time arguments are not ordered as required."""


class WindowError(PreconditionError):
    """Time outside the steering window."""


class NearOrthogonalError(PreconditionError):
    """Steering target at (or too close to) FS distance pi/2."""


class ChainError(PreconditionError):
    """Point sequence is not a valid strong chain."""


class InfeasibleError(PreconditionError):
    """Target unreachable on the net (or only above the cost cap)."""


# Budget family (exit code 4)

class BudgetError(ReversibilityError):
    """A search exhausted its step budget."""

    exit_code = 4


class StagnationError(BudgetError):
    """No bucket reached the visit threshold for a limit stage."""


class SizeCapError(BudgetError):
    """Closure of a candidate set exceeded its size cap."""

"""Exception taxonomy shared across the package.

Every error raised by library code derives from CFTreeError so callers (CLI,
service) can map failures to exit codes / HTTP statuses in one place. Input
and document problems derive from InputError; solver-side breakdowns derive
from SolverError.
"""

from __future__ import annotations


class CFTreeError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------------------
# input / document errors
# ---------------------------------------------------------------------------

class InputError(CFTreeError):
    """Invalid user input: schemas, documents, instances, flags."""


class MalformedDocument(InputError):
    """A JSON document does not match its declared format."""


class SchemaMismatch(InputError):
    """Instance or weight data inconsistent with the feature schema."""


class UnknownCategory(InputError):
    """Categorical value not among the declared categories."""


class OutOfRangeValue(InputError):
    """Continuous value outside its declared [lower, upper] interval."""


class NonIntegralBlock(InputError):
    """A one-hot block is not within tolerance of an exact one-hot vector.

    On decode this signals a relaxation leak: some solver path returned
    fractional dummies where integrality was required.
    """


class DimensionMismatch(InputError):
    """Vector length differs from the schema's encoded dimension."""


class CyclicStructure(MalformedDocument):
    """Tree document contains a cycle or a node with two parents."""


class UnknownNodeReference(MalformedDocument):
    """Decision node references a child id that does not exist."""


class BadWeightDimension(MalformedDocument):
    """Decision weights have the wrong length, or violate the axis-aligned
    one-indicator pattern."""


class NotALeaf(InputError):
    """Leaf operation applied to a decision node id."""


class EmptyTargetSet(InputError):
    """Target class set is empty or contains no valid class."""


class InvalidTarget(InputError):
    """Target violates its invariants (e.g. targets the source class
    without same-class mode)."""


class NonPSDMatrix(InputError):
    """Quadratic cost matrix is indefinite beyond tolerance."""


class ContradictoryConstraints(InputError):
    """Constraints are syntactically unsatisfiable (e.g. a freeze pins a
    value outside declared bounds)."""


class InvalidEpsilon(InputError):
    """Margin epsilon is negative or not a finite number."""


class DegenerateData(InputError):
    """Training data carries a single class; no split possible."""


# ---------------------------------------------------------------------------
# solver errors
# ---------------------------------------------------------------------------

class SolverError(CFTreeError):
    """Numerical failure inside a solver (not plain infeasibility, which is
    a reported status)."""


class NumericalBreakdown(SolverError):
    """Pivot/step degeneracy persisted beyond the anti-cycling budget."""


class IterationLimit(SolverError):
    """Active-set iteration cap exceeded."""


class NodeBudgetExceeded(SolverError):
    """Branch-and-bound node budget hit; carries the incumbent and gap."""

    def __init__(self, message: str, incumbent=None, bound_gap: float | None = None):
        super().__init__(message)
        self.incumbent = incumbent
        self.bound_gap = bound_gap


class EmptyInterval(SolverError):
    """Per-coordinate interval [l, u] with l > u."""


class NoAdmissibleCategory(SolverError):
    """A categorical block has no category consistent with its constraints."""


class NonSeparableCostOnSeparablePath(SolverError):
    """Internal dispatch assertion: a cross-coordinate cost reached the
    separable solver."""


class OracleTooLarge(CFTreeError):
    """Oracle preconditions (dimension / row count) exceeded."""


class GenerationFailed(CFTreeError):
    """Random tree generation could not satisfy split-balance constraints."""

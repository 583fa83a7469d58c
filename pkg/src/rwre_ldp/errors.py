"""Exception hierarchy shared by all modules."""


class RwreError(Exception):
    """Base class for all package errors."""


class InvariantViolation(RwreError):
    """A loaded or constructed object fails its own constructor checks."""


class RowSumError(InvariantViolation):
    """A probability row deviates from 1 by more than the tolerance."""


class NonPositiveEntry(InvariantViolation):
    """A transition probability is zero or negative."""


class ParseError(RwreError):
    """An environment file is structurally malformed."""


class BoxTooSmall(RwreError):
    """A boxed environment does not cover the lattice ball the walk needs."""


class TooLarge(RwreError):
    """Exhaustive path enumeration was requested beyond the supported size."""


class NoConvergence(RwreError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class CellMismatch(RwreError):
    """A corrector and an environment live on different periodic cells."""


class NotInvariant(RwreError):
    """A candidate density is not invariant for its kernel."""

    def __init__(self, residual):
        super().__init__(f"density is not invariant: residual {residual:.3e}")
        self.residual = residual


class NonConvexInput(RwreError):
    """Sampled values handed to the Legendre transform are not convex."""


class DomainError(RwreError):
    """A velocity argument lies outside the reachable interval."""


class EdgeUndefined(RwreError):
    """A path traverses an edge the field does not define."""


class OutOfBox(RwreError):
    """A point lies outside the region where a field is available."""


class NotNearestNeighbor(RwreError):
    """A lattice path contains a step that is not a unit step."""


class ClassKError(RwreError):
    """An edge field violates one of the corrector class conditions."""


class Divergent(RwreError):
    """A passage-time transform diverges at the requested tilt."""

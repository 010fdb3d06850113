"""Exception types shared across the package."""


class PolyfiltError(ValueError):
    """Base class for all package-specific errors."""


class DimensionMismatchError(PolyfiltError):
    """Operands have incompatible dimensions."""


class EmptyPolytopeError(PolyfiltError):
    """The constraint system has no feasible point."""


class UnboundedPolyhedronError(PolyfiltError):
    """The constraint system is feasible but unbounded (a polyhedron, not a polytope)."""


class IllConditionedError(PolyfiltError):
    """A matrix is singular or too ill-conditioned to invert reliably."""


class NotSPDError(PolyfiltError):
    """A matrix required to be symmetric positive (semi-)definite is not."""


class InconsistentMeasurementError(PolyfiltError):
    """A measurement polytope does not intersect the prior polytope."""


class DegenerateWeightsError(PolyfiltError):
    """All mixture weights vanished (numerical underflow or zero likelihoods)."""


class DegeneratePolytopeError(PolyfiltError):
    """A polytope appears to have zero volume along every probed direction."""

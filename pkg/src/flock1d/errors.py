"""Exception types shared across the package."""


class Flock1dError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(Flock1dError, ValueError):
    """A constructor or configuration invariant was violated."""


class DimensionMismatch(Flock1dError, ValueError):
    """Two inputs that must share a size or shape do not."""


class BadRange(Flock1dError, ValueError):
    """An interval is empty, unbounded, or otherwise unusable."""


class NotNormalized(Flock1dError, ValueError):
    """Weights of a discrete measure do not sum to one."""


class GridMismatch(Flock1dError, ValueError):
    """Two pseudo-inverse fields do not share the same velocity grid."""


class SizeCapExceeded(Flock1dError, ValueError):
    """An exact solver was asked for a problem above its size cap."""


class DegenerateSupport(Flock1dError, ValueError):
    """A density has zero (or non-finite) total mass."""


class NonPositiveValues(Flock1dError, ValueError):
    """A log-scale fit was requested on non-positive data."""


class CollisionError(Flock1dError, RuntimeError):
    """Two particles occupy the same position where the weight is singular."""


class NumericalBlowup(Flock1dError, RuntimeError):
    """A state became non-finite during time integration."""


class MonotonicityViolation(Flock1dError, RuntimeError):
    """Mass levels within a velocity slice lost their ordering."""


class ParseError(Flock1dError, ValueError):
    """A configuration file or flag could not be parsed."""

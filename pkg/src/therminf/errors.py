"""Exception hierarchy for therminf.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map it to a stable exit code.
"""


class TherminfError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(TherminfError):
    """Array shapes are inconsistent with the declared number of edges."""


class NondegenerateNetworkError(TherminfError):
    """The reduced stiffness matrix B^T C B is singular or indefinite."""


class SubspaceDimensionError(TherminfError):
    """The admissible set does not have the expected dimension N."""


class OffSubspaceError(TherminfError):
    """A point expected to lie on an affine subspace is too far from it."""


class GridCapError(TherminfError):
    """A tensor grid would exceed the configured point cap."""


class TransversalityError(TherminfError):
    """No transversality certificate exists at the requested beta0."""


class NotFiniteError(TherminfError):
    """A Gaussian form has non-positive-definite precision; mass is infinite."""


class FlatNormSolverError(TherminfError):
    """The flat-norm LP solver failed to converge or certify optimality."""


class ZeroMassError(TherminfError):
    """Every point's thermal mass underflowed; the measure is numerically zero."""


class ScheduleError(TherminfError):
    """An annealing schedule violates its construction invariants."""


class QoIParseError(TherminfError):
    """A quantity-of-interest expression could not be parsed."""


class DatasetFormatError(TherminfError):
    """A dataset CSV or its metadata sidecar is malformed."""

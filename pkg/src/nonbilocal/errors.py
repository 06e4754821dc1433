"""Exceptions raised by the simulation library."""


class BilocalError(ValueError):
    """Base class for all library errors."""


class NotSymmetric(BilocalError):
    pass


class NonUnitVector(BilocalError):
    pass


class ParameterOutOfRange(BilocalError):
    pass


class DimensionMismatch(BilocalError):
    pass


class ZeroSuccessProbability(BilocalError):
    """Post-selection kept nothing: the filtered state has zero trace."""


class NoCrossing(BilocalError):
    """The bisection bracket does not straddle the bilocal bound."""

"""Shared exception types."""


class NumericFailure(RuntimeError):
    """An iterative numerical procedure failed to converge or produced non-finite values."""


class InfeasibleOperatingPoint(RuntimeError):
    """The requested operating point cannot be realized by the physical device."""

"""Exception types raised across the package."""


class DivsafeError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DivsafeError, ValueError):
    """Non-finite, empty, or otherwise unusable numeric input."""


class InvalidParameterError(DivsafeError, ValueError):
    pass


class ShapeError(DivsafeError, ValueError):
    """Array dimensions do not chain with the model or fitted detector."""


class ConfigurationError(DivsafeError, ValueError):
    pass


class FitError(DivsafeError, ValueError):
    pass


class CalibrationError(DivsafeError, ValueError):
    pass


class ChannelFaultError(DivsafeError):
    """A voter channel produced no verdict (or a verdict for the wrong channel)."""


class InvariantViolation(DivsafeError, AssertionError):
    """A counting identity that must hold by construction was violated."""

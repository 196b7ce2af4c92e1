"""Exception types shared across the package."""


class WassDroError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(WassDroError, ValueError):
    """A problem/config object violates a construction-time requirement."""


class ValidationError(WassDroError, ValueError):
    """Data fails a domain invariant (non-finite values, bad weights, ...)."""


class ParseError(WassDroError, ValueError):
    """A file could not be parsed; the message names the offending line."""


class ShapeError(WassDroError, ValueError):
    """Array dimensions are incompatible."""


class OracleLimitError(WassDroError, ValueError):
    """The exact transport oracle was asked for more than it supports."""


class DivergedError(WassDroError, RuntimeError):
    """An iterative solve produced non-finite values.

    Carries the iterate trace collected up to the failure for post-mortems.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

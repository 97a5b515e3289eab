"""Exception types shared across the package."""


class TrustSimError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TrustSimError, ValueError):
    """Array dimensions do not line up."""


class NumericError(TrustSimError, FloatingPointError):
    """A computation produced a non-finite value."""


class StateError(TrustSimError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class DomainError(TrustSimError, ValueError):
    """An argument lies outside the domain the operation accepts."""


class InsufficientEvidenceError(TrustSimError):
    """Not enough transmission evidence to evaluate trust."""


class InsufficientDataError(TrustSimError):
    """Not enough samples to train or summarize."""


class ConfigError(TrustSimError, ValueError):
    """Configuration file or flag could not be parsed or validated."""

"""Exception types shared across the package."""


class RotorGibbsError(Exception):
    """Base class for all package errors."""


class DomainError(RotorGibbsError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class UsageError(RotorGibbsError, ValueError):
    """Inconsistent or malformed arguments (shapes, indices, options)."""


class RegimeError(RotorGibbsError):
    """Parameters fall outside the regime where an analysis applies."""

"""Exception types raised by the package."""


class StochCoolError(Exception):
    """Base class for all package errors."""


class DomainError(StochCoolError, ValueError):
    """An argument lies outside the domain of the operation."""


class UsageError(StochCoolError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class CapacityError(StochCoolError, RuntimeError):
    """The truncated mode set cannot represent the requested state."""


class ConvergenceError(StochCoolError, RuntimeError):
    """A numerical procedure did not reach its tolerance."""

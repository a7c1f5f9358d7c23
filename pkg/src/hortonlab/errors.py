"""Exception types shared across the package."""


class HortonLabError(Exception):
    """Base class for all package errors."""


class TreeInvalidError(HortonLabError):
    """An operation received a tree that violates a structural invariant."""


class ParameterError(HortonLabError):
    """A parameter set violates its domain constraints."""


class OrderCapError(HortonLabError):
    """A sampler drew (or would build) an order above the configured cap."""


class DomainError(HortonLabError):
    """A numeric argument lies outside the operation's domain."""

"""Exception types shared across the package."""


class InnodpcError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(InnodpcError, ValueError):
    """Incompatible or out-of-range shapes, lengths or indices."""


class RankError(InnodpcError, ValueError):
    """A matrix that must have full (numerical) rank does not."""


class NumericalError(InnodpcError, RuntimeError):
    """An iterative or direct numerical procedure failed."""


class DomainError(InnodpcError, ValueError):
    """An input is outside the mathematical domain of the operation."""


class ConfigError(InnodpcError, ValueError):
    """An experiment configuration failed validation."""

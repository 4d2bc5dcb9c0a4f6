"""Exception types shared across the package."""


class MMCLError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(MMCLError, ValueError):
    """An input violates a documented precondition."""


class InvalidBatchError(ValidationError):
    """A batch is too small or malformed for the requested operation."""


class ConfigurationError(MMCLError):
    """Incompatible shapes, dimensions, or configuration values."""


class RecipeError(ConfigurationError):
    """A loss recipe references a term that is unavailable or unknown."""


class CheckpointError(ConfigurationError):
    """A checkpoint cannot be parsed or restored into the requested model."""

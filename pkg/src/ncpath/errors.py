"""Exception types raised by the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, inputs or configuration."""


class LineSearchError(RuntimeError):
    """The quadratic coefficient search failed to find a majorizing model."""

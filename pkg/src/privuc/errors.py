"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class InvalidInputError(ValueError):
    """Input data violates a precondition (wrong domain, shape, neighbors)."""


class CapacityError(RuntimeError):
    """A metric packing would exceed the configured number of centers."""


class DegenerateEstimateError(ArithmeticError):
    """A density estimate has no positive mass left to normalize."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""

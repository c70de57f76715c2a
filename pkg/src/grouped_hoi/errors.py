"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class EmptyGroupError(ValueError):
    """A reduction was requested over zero elements."""


class NumericError(FloatingPointError):
    """An operation produced NaN or Inf."""


class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class BoxError(ValueError):
    """Degenerate or out-of-frame bounding box."""


class GenerationError(RuntimeError):
    """A synthetic scene could not be placed under the given config."""


class DataError(RuntimeError):
    """Missing or malformed data / checkpoint file."""

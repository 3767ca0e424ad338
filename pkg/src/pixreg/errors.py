"""Exception taxonomy shared across the package.

Every error raised on a contract violation derives from PixregError so the
CLI can map failures to categorized exit lines.
"""


class PixregError(Exception):
    """Base class for all package errors."""

    category = "error"


class ShapeError(PixregError, ValueError):
    """Operand dimensions are incompatible."""

    category = "shape"


class RangeError(PixregError, ValueError):
    """A value lies outside its declared bounds."""

    category = "range"


class ConfigError(PixregError, ValueError):
    """A configuration value is invalid or inconsistent."""

    category = "config"


class ArgumentError(PixregError, ValueError):
    """A function argument violates its precondition."""

    category = "argument"


class StateError(PixregError, RuntimeError):
    """Mutable state is not in the condition an operation requires."""

    category = "state"


class TrainingError(PixregError, RuntimeError):
    """Training diverged or could not proceed."""

    category = "training"


class GeometryError(PixregError, ValueError):
    """A geometric configuration is degenerate."""

    category = "geometry"


class UndefinedInputError(PixregError, ValueError):
    """The requested quantity is mathematically undefined for this input."""

    category = "undefined-input"


class NonFiniteError(PixregError, FloatingPointError):
    """A NaN or Inf appeared in a forward or backward pass."""

    category = "non-finite"

"""pixreg: conditional pixel-wise image regression.

Learns pixel intensity as a function of operating-point parameters and
normalized pixel coordinates, reconstructs images at unseen operating
points, scores fidelity with a five-metric suite, and optionally corrects
known-faulty image regions through loss modulation guided by a small
fault classifier.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ArgumentError,
    ConfigError,
    GeometryError,
    NonFiniteError,
    PixregError,
    RangeError,
    ShapeError,
    StateError,
    TrainingError,
    UndefinedInputError,
)
from .image import ImageGrid  # noqa: F401

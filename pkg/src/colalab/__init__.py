"""Compositional latent components for zero-shot glyph recognition."""

__version__ = "0.1.0"

from .estimator import CoLaClassifier  # noqa: E402
from .exceptions import (CapacityExceededError, DegenerateSplitError,  # noqa: E402
                         InvalidArgumentError, NumericError, ShapeError, StateError)

__all__ = [
    "CapacityExceededError", "CoLaClassifier", "DegenerateSplitError", "InvalidArgumentError",
    "NumericError", "ShapeError", "StateError", "__version__",
]

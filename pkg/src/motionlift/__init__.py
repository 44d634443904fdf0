"""motionlift: 2D-to-3D skeleton lifting with a dual-stream spatio-temporal
transformer, masked-input pretraining, and pose/action/mesh finetuning heads.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, MotionliftError, NumericError, ShapeError
from .rng import SeededRng
from .tensor import Tensor, backward, zero_grads

__all__ = [
    "ConfigError",
    "DataError",
    "MotionliftError",
    "NumericError",
    "ShapeError",
    "SeededRng",
    "Tensor",
    "backward",
    "zero_grads",
    "__version__",
]

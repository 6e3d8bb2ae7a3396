"""Feature pyramid attention toolkit for environmental sound classification."""

from .tensor import Tensor, no_grad, precision, set_default_dtype
from .optim import ParamStore, sgd_momentum_step

__all__ = [
    "Tensor",
    "ParamStore",
    "sgd_momentum_step",
    "no_grad",
    "precision",
    "set_default_dtype",
]

__version__ = "0.1.0"

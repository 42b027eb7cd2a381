"""Aspect-fusion LSTM with holographic (circular convolution / correlation) attention."""

__version__ = "0.1.0"

from .autograd import Parameter, Tape, Tensor, grad_check
from .holo import FusionOperator, circ_conv, circ_corr
from .model import Model, ModelConfig, ModelVariant, param_count
from .training import TrainConfig, evaluate, train

__all__ = [
    "FusionOperator", "Model", "ModelConfig", "ModelVariant", "Parameter", "Tape",
    "Tensor", "TrainConfig", "circ_conv", "circ_corr", "evaluate", "grad_check",
    "param_count", "train",
]

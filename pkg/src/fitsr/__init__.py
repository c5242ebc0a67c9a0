"""Continuous-scale image super-resolution with Fourier-domain feature mixing and attention.

A from-scratch numpy implementation: unitary FFT, a small reverse-mode
autodiff tape, the frequency incorporation block, both attention branches,
a coordinate decoder, training, evaluation and a command-line tool.
"""

from .model import ModelConfig, ModelParams, fit_forward, tiny_config
from .tensor import ConfigError, ShapeError
from .train import TrainConfig

__all__ = [
    "ConfigError",
    "ModelConfig",
    "ModelParams",
    "ShapeError",
    "TrainConfig",
    "fit_forward",
    "tiny_config",
]
__version__ = "0.1.0"

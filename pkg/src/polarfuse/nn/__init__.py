"""Minimal NCHW neural-network kernel with hand-derived gradients."""

from . import functional
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    AvgPool2,
    Conv2d,
    Linear,
    Module,
    Parameter,
    ReLU,
    Sequential,
    Sigmoid,
    SiLU,
    UpsampleNearest2,
)
from .optim import Adam, cosine_lr

__all__ = [
    "Adam",
    "AvgPool2",
    "Conv2d",
    "GradCheckReport",
    "Linear",
    "Module",
    "Parameter",
    "ReLU",
    "Sequential",
    "SiLU",
    "Sigmoid",
    "UpsampleNearest2",
    "cosine_lr",
    "functional",
    "grad_check",
]

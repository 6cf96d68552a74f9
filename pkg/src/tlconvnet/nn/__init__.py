"""Minimal 1D ConvNet engine: layers, loss, optimizers, gradient checking."""
from .gradcheck import GradCheckResult, gradient_check, relative_error
from .layers import (
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1D,
    ReLU,
    Sequential,
    Sigmoid,
    activation,
    activation_apply,
    sigmoid,
)
from .losses import bce_loss
from .optim import Optimizer, OptimizerState, optimizer_step

__all__ = [
    "Conv1D",
    "Dense",
    "Dropout",
    "Flatten",
    "GradCheckResult",
    "Layer",
    "MaxPool1D",
    "Optimizer",
    "OptimizerState",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "activation",
    "activation_apply",
    "bce_loss",
    "gradient_check",
    "optimizer_step",
    "relative_error",
    "sigmoid",
]

"""Minimal neural-network kernel on numpy.

Just enough machinery for the convolutional autoencoders and the
parameter-to-encoding regressor used by the reduced order models: a
parameter tensor, a small layer zoo with explicit forward/backward,
MSE and binary cross-entropy losses, Adam, a one-cycle learning-rate
schedule, a shared training loop and finite-difference gradient checking.
Activations are plain float32 arrays; convolutions run as im2col matrix
products so all heavy lifting stays inside BLAS.
"""

from .tensor import Tensor
from .layers import (
    BatchNorm,
    Conv2d,
    Dropout,
    Flatten,
    Layer,
    LeakyReLU,
    Linear,
    MissingContext,
    Reshape,
    ShapeMismatch,
    Sigmoid,
    Upsample2x,
)
from .network import Sequential
from .losses import bce_loss, bce_with_logits_loss, mse_loss
from .optim import Adam, OneCycleSchedule, StepOutOfRange
from .train import NonFiniteLoss, TrainReport, fit
from .gradcheck import grad_check

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv2d",
    "Dropout",
    "Flatten",
    "Layer",
    "LeakyReLU",
    "Linear",
    "MissingContext",
    "NonFiniteLoss",
    "OneCycleSchedule",
    "Reshape",
    "Sequential",
    "ShapeMismatch",
    "Sigmoid",
    "StepOutOfRange",
    "Tensor",
    "TrainReport",
    "Upsample2x",
    "bce_loss",
    "bce_with_logits_loss",
    "fit",
    "grad_check",
    "mse_loss",
]

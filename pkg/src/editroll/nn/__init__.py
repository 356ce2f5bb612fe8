"""Convolutional scorer: tensor autodiff, U-Net, loss, optimizer, training."""

from .tensor import Tensor
from .unet import (
    DESK_CONFIG,
    PAPER_CONFIG,
    ScorerModel,
    UNetConfig,
    forward,
    init_model,
    kl_uniform_loss,
    loss_and_grads,
)
from .optim import AdamState, adam_step
from .checkpoint import load_model, save_model
from .training import TrainResult, train

__all__ = [
    "AdamState",
    "DESK_CONFIG",
    "PAPER_CONFIG",
    "ScorerModel",
    "Tensor",
    "TrainResult",
    "UNetConfig",
    "adam_step",
    "forward",
    "init_model",
    "kl_uniform_loss",
    "load_model",
    "loss_and_grads",
    "save_model",
    "train",
]

"""Self-contained neural-network engine: layers, losses, Adam, model I/O."""

from .adam import Adam, adam_step
from .layers import Conv2D, Dense, Dropout, Flatten, LeakyReLU, MaxPool2x2, ReLU, Softmax, glorot_uniform
from .modelio import load_model, load_optstate, model_summary, save_model, save_optstate
from .network import (
    Network,
    TrainConfig,
    build_cnn,
    build_mlp,
    cross_entropy_grad_logits,
    cross_entropy_loss,
)

__all__ = [
    "Adam",
    "adam_step",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LeakyReLU",
    "MaxPool2x2",
    "ReLU",
    "Softmax",
    "glorot_uniform",
    "Network",
    "TrainConfig",
    "build_cnn",
    "build_mlp",
    "cross_entropy_loss",
    "cross_entropy_grad_logits",
    "save_model",
    "load_model",
    "save_optstate",
    "load_optstate",
    "model_summary",
]

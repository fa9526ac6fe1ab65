"""Minimal dense-network engine: reverse-mode gradients, stop-gradient, Adam, losses."""

from .autodiff import Tensor, backward as backward_graph, stop_gradient
from .losses import GAUSSIAN_NLL, HET_SOFTMAX_CE, MSE, SOFTMAX_CE, LossKind, loss_and_grad, softmax
from .mlp import MLPSpec, ParamBlock, backward, forward, mlp_init
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "GAUSSIAN_NLL",
    "HET_SOFTMAX_CE",
    "LossKind",
    "MLPSpec",
    "MSE",
    "ParamBlock",
    "SOFTMAX_CE",
    "Tensor",
    "adam_step",
    "backward",
    "backward_graph",
    "forward",
    "loss_and_grad",
    "mlp_init",
    "softmax",
    "stop_gradient",
]

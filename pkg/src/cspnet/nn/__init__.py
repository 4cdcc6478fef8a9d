"""Minimal reverse-mode engine: layers, graphs, loss, Adam, gradient checks."""

from .gradcheck import grad_check
from .graph import (
    ModelGraph,
    Parameter,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)
from .layers import LayerSpec, layer_forward
from .loss import softmax_xent
from .optim import AdamState, adam_step, init_adam

__all__ = [
    "AdamState",
    "LayerSpec",
    "ModelGraph",
    "Parameter",
    "adam_step",
    "grad_check",
    "init_adam",
    "layer_forward",
    "load_checkpoint",
    "model_backward",
    "model_forward",
    "save_checkpoint",
    "softmax_xent",
]

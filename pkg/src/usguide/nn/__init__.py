from .layers import LayerSpec, conv2d, flatten, linear, maxpool2x2, relu, softmax
from .network import (
    ParamStore,
    Network,
    grad_check,
    load_params,
    save_params,
    sgd_step,
)
from .losses import cross_entropy_batch, loss_cross_entropy, softmax_probs

__all__ = [
    "LayerSpec",
    "conv2d",
    "maxpool2x2",
    "relu",
    "flatten",
    "linear",
    "softmax",
    "ParamStore",
    "Network",
    "sgd_step",
    "grad_check",
    "save_params",
    "load_params",
    "loss_cross_entropy",
    "cross_entropy_batch",
    "softmax_probs",
]

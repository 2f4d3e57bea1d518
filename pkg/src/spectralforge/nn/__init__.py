"""From-scratch differentiable 1-D CNN kernels, loss, and optimizer."""

from .layers import (
    Activation,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    flatten_backward,
    flatten_forward,
    relu_backward,
    relu_forward,
)
from .loss import huber_loss
from .model import (
    ModelSpec,
    ModelState,
    backward,
    build_fishcnn,
    count_parameters,
    flat_grads,
    forward,
    init_state,
    receptive_field,
)
from .optim import AdamWState, adamw_step

__all__ = [
    "Activation", "Conv1D", "Dense", "Dropout", "Flatten", "LayerSpec",
    "conv1d_forward", "conv1d_backward", "dense_forward", "dense_backward",
    "dropout_forward", "dropout_backward", "flatten_forward", "flatten_backward",
    "relu_forward", "relu_backward", "huber_loss",
    "ModelSpec", "ModelState", "forward", "backward", "flat_grads",
    "build_fishcnn", "init_state", "receptive_field", "count_parameters",
    "AdamWState", "adamw_step",
]

"""From-scratch float64 numerics for the field denoiser."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .denoiser import (
    CHANNELS,
    backward,
    forward,
    init_params,
    null_token,
    param_specs,
    validate_params,
)
from .gradcheck import fd_gradient, gradcheck_denoiser, relative_error
from .kernels import (
    NonFiniteInput,
    ShapeMismatch,
    mse_backward,
    mse_forward,
    mse_per_item,
    timestep_embedding,
)
from .optim import AdamW

__all__ = [
    "AdamW",
    "CHANNELS",
    "CheckpointError",
    "NonFiniteInput",
    "ShapeMismatch",
    "backward",
    "fd_gradient",
    "forward",
    "gradcheck_denoiser",
    "init_params",
    "load_checkpoint",
    "mse_backward",
    "mse_forward",
    "mse_per_item",
    "null_token",
    "param_specs",
    "relative_error",
    "save_checkpoint",
    "timestep_embedding",
    "validate_params",
]

"""Dense numeric core: tape autodiff, hot kernels, grad checking, checkpoints."""

from .kernels import (
    HAVE_COMPILED,
    conv1d_tanh_backward,
    conv1d_tanh_backward_numpy,
    conv1d_tanh_forward,
    conv1d_tanh_forward_numpy,
)
from .gradcheck import grad_check
from .serialize import load_tensors, save_tensors
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    conv1d_tanh,
    dropout,
    dropout_mask,
    gather_rows,
    logsumexp,
    matmul,
    maxpool_time,
    mul,
    sigmoid,
    softplus,
    stack,
    take,
    tanh,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "HAVE_COMPILED",
    "Tensor",
    "add",
    "as_tensor",
    "concat",
    "conv1d_tanh",
    "conv1d_tanh_backward",
    "conv1d_tanh_backward_numpy",
    "conv1d_tanh_forward",
    "conv1d_tanh_forward_numpy",
    "dropout",
    "dropout_mask",
    "gather_rows",
    "grad_check",
    "load_tensors",
    "logsumexp",
    "matmul",
    "maxpool_time",
    "mul",
    "save_tensors",
    "sigmoid",
    "softplus",
    "stack",
    "take",
    "tanh",
    "tmean",
    "transpose",
    "tsum",
]

"""Dense kernels, reverse-mode differentiation and AdamW."""

from .autograd import (
    Tensor,
    backward,
    bce_with_logits,
    concat,
    exp,
    gelu,
    log,
    log_softmax,
    matmul,
    softmax,
    softmax_rows,
    sqrt,
    tensor,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import add_attention, add_linear, linear, multihead_attention, uniform_init
from .optim import OptimConfig, adamw_step, lr_at
from .params import ParamStore

__all__ = [
    "OptimConfig",
    "ParamStore",
    "Tensor",
    "adamw_step",
    "add_attention",
    "add_linear",
    "backward",
    "bce_with_logits",
    "concat",
    "exp",
    "gelu",
    "linear",
    "load_checkpoint",
    "log",
    "log_softmax",
    "lr_at",
    "matmul",
    "multihead_attention",
    "save_checkpoint",
    "softmax",
    "softmax_rows",
    "sqrt",
    "tensor",
    "uniform_init",
]

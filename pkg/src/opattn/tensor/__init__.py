"""Minimal reverse-mode autodiff engine on numpy arrays.

Provides exactly the primitive set the restoration network needs, in single
and double precision, plus a finite-difference gradient checker.
"""

from ._threads import limit_blas_threads
from .core import ParamStore, ShapeError, Tape, Tensor, active_tape, backward, record
from .gradcheck import GradCheckReport, gradcheck
limit_blas_threads()

from .ops import (
    add,
    avg_pool_same,
    concat_channels,
    conv2d,
    dense_nobias,
    depthwise_conv2d,
    global_channel_mean,
    l1_loss,
    relu,
    scale_channels,
    softmax,
    take_column,
    take_row,
    tensor_sum,
)

__all__ = [
    "Tensor", "Tape", "ParamStore", "ShapeError", "active_tape", "backward", "record",
    "gradcheck", "GradCheckReport",
    "conv2d", "depthwise_conv2d", "avg_pool_same", "relu", "global_channel_mean",
    "dense_nobias", "softmax", "scale_channels", "concat_channels", "add",
    "l1_loss", "tensor_sum", "take_row", "take_column",
]

"""Minimal dense tensor library with reverse-mode gradients."""

from .adam import adam_step
from .core import Op, Parameter, Tensor, assert_finite, no_grad
from .gradcheck import grad_check
from .ops import (
    affine,
    conv3d,
    cross_entropy,
    lstm_step,
    maxpool3d,
    relu,
    reshape,
    slice_time,
    softmax,
)

__all__ = [
    "Tensor", "Parameter", "Op", "no_grad", "assert_finite",
    "conv3d", "maxpool3d", "relu", "reshape", "slice_time",
    "affine", "lstm_step", "softmax", "cross_entropy",
    "adam_step", "grad_check",
]

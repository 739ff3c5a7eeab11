"""Minimal tensor engine with reverse-mode differentiation."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .ops import conv_output_size, op_apply
from .tensor import Tensor, backward, is_grad_enabled, no_grad, tensor_from

__all__ = [
    "GradCheckReport",
    "Tensor",
    "backward",
    "conv_output_size",
    "grad_check",
    "is_grad_enabled",
    "no_grad",
    "op_apply",
    "ops",
    "tensor_from",
]

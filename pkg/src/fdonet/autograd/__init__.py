"""Minimal reverse-mode autodiff over numpy arrays."""

from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Module, Parameter
from .ops import (
    as_complex,
    broadcast_to,
    concat,
    conv2d,
    conv_transpose2d,
    crop,
    einsum,
    imag,
    irfft2,
    linear,
    pad,
    real,
    rfft2,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, add, div, mean, mul, neg, no_grad, relu, reshape, square, sub, tabs, tensor, transpose, tsum

__all__ = [
    "Adam",
    "AdamState",
    "Module",
    "Parameter",
    "Tensor",
    "adam_step",
    "add",
    "as_complex",
    "broadcast_to",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "crop",
    "div",
    "einsum",
    "imag",
    "irfft2",
    "linear",
    "load_checkpoint",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "pad",
    "real",
    "relu",
    "reshape",
    "rfft2",
    "save_checkpoint",
    "square",
    "sub",
    "tabs",
    "tensor",
    "transpose",
    "tsum",
]

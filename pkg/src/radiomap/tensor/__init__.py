"""Small dense-tensor engine with reverse-mode differentiation."""
from . import ops
from .core import Tensor, backward, default_dtype, grad_enabled, no_grad, precision
from .io import FormatError, load_checkpoint, load_tensor, save_checkpoint, save_tensor
from .nn import (BatchNorm2d, Conv2d, ConvBNReLU, ConvTranspose2d, Dropout, LayerRecord, MaxPool2d,
                 Module, ReLU, Sequential, TConvBNReLU, Upsample2x)
from .optim import Adam, AdamState, adam_step
from .random import RandomStream

__all__ = [
    "ops", "Tensor", "backward", "default_dtype", "grad_enabled", "no_grad", "precision",
    "FormatError", "load_checkpoint", "load_tensor", "save_checkpoint", "save_tensor",
    "BatchNorm2d", "Conv2d", "ConvBNReLU", "ConvTranspose2d", "Dropout", "LayerRecord", "MaxPool2d",
    "Module", "ReLU", "Sequential", "TConvBNReLU", "Upsample2x",
    "Adam", "AdamState", "adam_step", "RandomStream",
]

"""Small reverse-mode autodiff engine over numpy arrays."""

from .losses import sigmoid, sigmoid_bce, softmax, softmax_cross_entropy
from .ops import (
    PRIMITIVE_KINDS,
    add,
    add_bias,
    apply_primitive,
    batchnorm,
    conv2d,
    dropout,
    flatten,
    matmul,
    maxpool2d,
    mul,
    relu,
    scale,
    sub,
    take_rows,
    total,
    weighted_sq_dev,
)
from .optim import OptimizerState, optimizer_step
from .tensor import (
    NARROW,
    WIDE,
    ContractError,
    NumericError,
    ParameterSet,
    ShapeError,
    Tensor,
    backward,
    finite_difference_gradient,
    relative_error,
)

__all__ = [
    "NARROW", "WIDE", "PRIMITIVE_KINDS", "ContractError", "NumericError", "OptimizerState", "ParameterSet",
    "ShapeError", "Tensor", "add", "add_bias", "apply_primitive", "backward", "batchnorm", "conv2d", "dropout",
    "finite_difference_gradient", "flatten", "matmul", "maxpool2d", "mul", "optimizer_step", "relative_error",
    "relu", "scale", "sigmoid", "sigmoid_bce", "softmax", "softmax_cross_entropy", "sub", "take_rows", "total",
    "weighted_sq_dev",
]

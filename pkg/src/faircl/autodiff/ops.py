"""Differentiable primitives.

Each primitive takes Tensors, computes its output with numpy (conv and pool
lean on :mod:`faircl.autodiff.kernels`), and records a closure that maps the
output gradient to input gradients.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, make_node


def _t(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", "expected (n,k) @ (k,m)", (a.shape, b.shape))
    A, B = a.data, b.data

    def bw(g):
        return (g @ B.T if a.requires_grad else None,
                A.T @ g if b.requires_grad else None)

    return make_node("matmul", A @ B, (a, b), bw)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-feature (2-D input) or per-channel (4-D input) bias."""
    if b.data.ndim != 1 or x.data.ndim not in (2, 4) or x.shape[1] != b.shape[0]:
        raise ShapeError("add_bias", "bias length must equal axis-1 extent", (x.shape, b.shape))
    if x.data.ndim == 2:
        out = x.data + b.data
        axes = (0,)
    else:
        out = x.data + b.data[None, :, None, None]
        axes = (0, 2, 3)

    def bw(g):
        return g, g.sum(axis=axes)

    return make_node("add_bias", out, (x, b), bw)


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError("add", "operands must share a shape", (a.shape, b.shape))
    return make_node("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError("sub", "operands must share a shape", (a.shape, b.shape))
    return make_node("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError("mul", "operands must share a shape", (a.shape, b.shape))
    A, B = a.data, b.data
    return make_node("mul", A * B, (a, b), lambda g: (g * B, g * A))


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)
    return make_node("scale", x.data * c, (x,), lambda g: (g * c,))


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    shape = x.shape
    return make_node("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def flatten(x: Tensor) -> Tensor:
    shape = x.shape
    return make_node("flatten", x.data.reshape(shape[0], -1), (x,), lambda g: (g.reshape(shape),))


def take_rows(x: Tensor, index) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= x.shape[0])):
        raise ShapeError("take_rows", "row index out of range", (x.shape, idx.shape))
    shape = x.shape

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return make_node("take_rows", x.data[idx], (x,), bw)


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """NCHW input, OIHW kernel, optional per-output-channel bias."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d", "expected NCHW input and OIHW kernel", (x.shape, w.shape))
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError("conv2d", "kernel in-channels differ from input channels", (c, ci))
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d", "stride must be >= 1 and padding >= 0", (stride, padding))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError("conv2d", "kernel larger than padded input", ((h, wd), (kh, kw)))
    if b is not None and b.shape != (o,):
        raise ShapeError("conv2d", "bias length must equal out-channels", (b.shape, o))

    cols = kernels.im2col(x.data, kh, kw, stride, padding)
    wmat = w.data.reshape(o, -1)
    out = (cols @ wmat.T).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[None, :, None, None]
    out = np.ascontiguousarray(out)
    xshape = x.shape

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = kernels.col2im(gm @ wmat, xshape, kh, kw, stride, padding) if x.requires_grad else None
        gw = (gm.T @ cols).reshape(w.shape) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return make_node("conv2d", out, parents, bw)


def maxpool2d(x: Tensor, kernel: int = 2, stride: Optional[int] = None) -> Tensor:
    stride = kernel if stride is None else stride
    if x.data.ndim != 4:
        raise ShapeError("maxpool2d", "expected NCHW input", x.shape)
    if x.shape[2] < kernel or x.shape[3] < kernel:
        raise ShapeError("maxpool2d", "input smaller than pooling window", (x.shape[2:], kernel))
    out, arg = kernels.maxpool_forward(x.data, kernel, stride)
    xshape = x.shape
    return make_node("maxpool2d", out, (x,),
                     lambda g: (kernels.maxpool_backward(g, arg, xshape, kernel, stride),))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalisation over axis 1 of a (N,F) or (N,C,H,W) input.

    Training mode normalises with batch statistics and updates the running
    buffers in place; eval mode uses the frozen running buffers.
    """
    if x.data.ndim not in (2, 4) or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batchnorm", "gamma/beta must match axis-1 extent", (x.shape, gamma.shape, beta.shape))
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
    X = x.data
    m = X.size // X.shape[1]
    if training:
        if m < 2:
            raise ShapeError("batchnorm", "training mode needs more than one value per channel", X.shape)
        mean = X.mean(axis=axes)
        var = X.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (X - mean.reshape(bshape)) * inv.reshape(bshape)
    out = (xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)).astype(X.dtype)
    G = gamma.data

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        if training:
            gx = (G * inv).reshape(bshape) / m * (
                m * g - dbeta.reshape(bshape) - xhat * dgamma.reshape(bshape))
        else:
            gx = g * (G * inv).reshape(bshape)
        return gx.astype(X.dtype), dgamma, dbeta

    return make_node("batchnorm", out, (x, gamma, beta), bw)


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity (the same tensor) in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make_node("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def weighted_sq_dev(theta: Tensor, anchor: np.ndarray, weight: np.ndarray) -> Tensor:
    """sum(weight * (theta - anchor)^2) as a scalar node."""
    if anchor.shape != theta.shape or weight.shape != theta.shape:
        raise ShapeError("weighted_sq_dev", "anchor/weight must match parameter", (theta.shape, anchor.shape, weight.shape))
    diff = theta.data - anchor
    val = np.asarray(np.sum(weight * diff * diff), dtype=theta.dtype)
    return make_node("weighted_sq_dev", val, (theta,), lambda g: ((2 * g * weight * diff).astype(theta.dtype),))


_PRIMITIVES = {
    "matmul": lambda ins, at: matmul(*ins),
    "add_bias": lambda ins, at: add_bias(*ins),
    "conv2d": lambda ins, at: conv2d(*ins, stride=at.get("stride", 1), padding=at.get("padding", 0)),
    "maxpool2d": lambda ins, at: maxpool2d(ins[0], at.get("kernel", 2), at.get("stride")),
    "relu": lambda ins, at: relu(ins[0]),
    "batchnorm": lambda ins, at: batchnorm(ins[0], ins[1], ins[2], at["running_mean"], at["running_var"],
                                           at.get("training", False), at.get("momentum", 0.1), at.get("eps", 1e-5)),
    "dropout": lambda ins, at: dropout(ins[0], at.get("rate", 0.5), at.get("training", False), at.get("rng")),
    "flatten": lambda ins, at: flatten(ins[0]),
    "add": lambda ins, at: add(*ins),
    "mul": lambda ins, at: mul(*ins),
}

PRIMITIVE_KINDS = tuple(_PRIMITIVES)


def apply_primitive(op: str, inputs: Sequence[Tensor], attrs: Optional[dict] = None) -> Tensor:
    """Dispatch a primitive by name, e.g. ``apply_primitive("conv2d", [x, w], {"padding": 1})``."""
    try:
        fn = _PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}; expected one of {PRIMITIVE_KINDS}") from None
    return fn(list(inputs), attrs or {})

"""Pure-numpy reference kernels for the convolution and pooling primitives."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    # (N, C, OH, OW, KH, KW) -> (N, OH, OW, C, KH, KW)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, x_shape, kh, kw, stride, pad):
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    dc = cols.reshape(n, oh, ow, c, kh, kw)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dc[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)


def maxpool_forward(x, k, stride):
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    win = win.reshape(n, c, oh, ow, k * k)
    # argmax returns the first maximum: ties resolve to the lowest window offset
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(grad, arg, x_shape, k, stride):
    n, c, h, w = x_shape
    oh, ow = grad.shape[2], grad.shape[3]
    dx = np.zeros(x_shape, dtype=grad.dtype)
    for i in range(k):
        for j in range(k):
            hit = grad * (arg == i * k + j)
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += hit
    return dx

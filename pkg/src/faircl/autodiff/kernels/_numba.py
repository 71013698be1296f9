"""numba-compiled kernels; same signatures and results as ``_numpy``."""

import numpy as np
from numba import njit


@njit(cache=True)
def _im2col(x, kh, kw, stride, pad, oh, ow):
    n, c, h, w = x.shape
    cols = np.empty((n * oh * ow, c * kh * kw), dtype=x.dtype)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (b * oh + oy) * ow + ox
                col = 0
                for ch in range(c):
                    for i in range(kh):
                        y = oy * stride + i - pad
                        for j in range(kw):
                            xx = ox * stride + j - pad
                            if 0 <= y < h and 0 <= xx < w:
                                cols[row, col] = x[b, ch, y, xx]
                            else:
                                cols[row, col] = 0
                            col += 1
    return cols


@njit(cache=True)
def _col2im(cols, n, c, h, w, kh, kw, stride, pad, oh, ow):
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (b * oh + oy) * ow + ox
                col = 0
                for ch in range(c):
                    for i in range(kh):
                        y = oy * stride + i - pad
                        for j in range(kw):
                            xx = ox * stride + j - pad
                            if 0 <= y < h and 0 <= xx < w:
                                out[b, ch, y, xx] += cols[row, col]
                            col += 1
    return out


@njit(cache=True)
def _maxpool_forward(x, k, stride, oh, ow):
    n, c, _, _ = x.shape
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    arg = np.empty((n, c, oh, ow), dtype=np.int64)
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    best = x[b, ch, oy * stride, ox * stride]
                    bi = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[b, ch, oy * stride + i, ox * stride + j]
                            # strict '>' keeps the first maximum, matching np.argmax
                            if v > best:
                                best = v
                                bi = i * k + j
                    out[b, ch, oy, ox] = best
                    arg[b, ch, oy, ox] = bi
    return out, arg


@njit(cache=True)
def _maxpool_backward(grad, arg, n, c, h, w, k, stride):
    dx = np.zeros((n, c, h, w), dtype=grad.dtype)
    _, _, oh, ow = grad.shape
    for b in range(n):
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    a = arg[b, ch, oy, ox]
                    dx[b, ch, oy * stride + a // k, ox * stride + a % k] += grad[b, ch, oy, ox]
    return dx


def im2col(x, kh, kw, stride, pad):
    _, _, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    return _im2col(np.ascontiguousarray(x), kh, kw, stride, pad, oh, ow)


def col2im(cols, x_shape, kh, kw, stride, pad):
    n, c, h, w = x_shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    return _col2im(np.ascontiguousarray(cols), n, c, h, w, kh, kw, stride, pad, oh, ow)


def maxpool_forward(x, k, stride):
    _, _, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    return _maxpool_forward(np.ascontiguousarray(x), k, stride, oh, ow)


def maxpool_backward(grad, arg, x_shape, k, stride):
    n, c, h, w = x_shape
    return _maxpool_backward(np.ascontiguousarray(grad), arg, n, c, h, w, k, stride)

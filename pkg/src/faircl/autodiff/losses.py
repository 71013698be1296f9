"""Classification losses in log-sum-exp stable form."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import ShapeError, Tensor, make_node


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(z)))


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax_cross_entropy(logits: Tensor, targets, weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target].

    ``weights`` scales each sample's term; the sum is still divided by the
    batch size, so unit weights reproduce the unweighted loss exactly.
    """
    z = logits.data
    if z.ndim != 2:
        raise ShapeError("softmax_cross_entropy", "logits must be batch x classes", z.shape)
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, m = z.shape
    if t.shape[0] != n:
        raise ShapeError("softmax_cross_entropy", "one target per row required", (n, t.shape[0]))
    if t.size and (t.min() < 0 or t.max() >= m):
        raise IndexError(f"softmax_cross_entropy: target out of range [0, {m})")
    w = np.ones(n, dtype=z.dtype) if weights is None else np.asarray(weights, dtype=z.dtype).reshape(-1)
    rows = np.arange(n)
    logp = log_softmax(z)
    per = -logp[rows, t]
    val = np.asarray(np.sum(w * per) / n, dtype=z.dtype)

    def bw(g):
        p = np.exp(logp)
        p[rows, t] -= 1
        return ((g / n) * w[:, None] * p).astype(z.dtype),

    return make_node("softmax_cross_entropy", val, (logits,), bw)


def sigmoid_bce(logits: Tensor, targets, weights: Optional[np.ndarray] = None) -> Tensor:
    """Mean over batch x units of binary cross-entropy on raw logits."""
    z = logits.data
    t = np.asarray(targets)
    if z.ndim != 2 or t.shape != z.shape:
        raise ShapeError("sigmoid_bce", "targets must match logits shape (batch x units)", (z.shape, t.shape))
    if not np.isin(t, (0, 1)).all():
        raise ValueError("sigmoid_bce: targets must be binary")
    t = t.astype(z.dtype)
    n, a = z.shape
    w = np.ones(n, dtype=z.dtype) if weights is None else np.asarray(weights, dtype=z.dtype).reshape(-1)
    per = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    val = np.asarray(np.sum(w[:, None] * per) / (n * a), dtype=z.dtype)

    def bw(g):
        return ((g / (n * a)) * w[:, None] * (sigmoid(z) - t)).astype(z.dtype),

    return make_node("sigmoid_bce", val, (logits,), bw)

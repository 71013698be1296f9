"""Shared test oracles, independent of the package's own finite-difference helper."""

import numpy as np


def fd_grad(f, arrays, h=1e-6):
    """Independent central-difference oracle: d f / d a for each array in ``arrays`` (edited in place)."""
    out = []
    for a in arrays:
        g = np.zeros(a.shape)
        flat, gf = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            v = flat[i]
            flat[i] = v + h
            fp = f()
            flat[i] = v - h
            fm = f()
            flat[i] = v
            gf[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


# gradient-check cases ------------------------------------------------------
# Each builder returns (arrays, fn): ``fn(tensors)`` rebuilds the op output from
# fresh Tensors wrapping ``arrays`` so the finite-difference route can perturb
# the arrays in place.

def _away_from_zero(rng, shape, gap=1e-2):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-30) * gap * 2, x)


def _distinct(rng, shape):
    # a permutation of well separated values, so the max inside a window is unique
    n = int(np.prod(shape))
    return (rng.permutation(n).reshape(shape) * 0.1 + 0.01 * rng.random(shape)).astype(np.float64)


def case_matmul(rng):
    n, k, m = rng.integers(1, 6, size=3)
    from faircl.autodiff import matmul
    return [rng.normal(size=(n, k)), rng.normal(size=(k, m))], lambda t: matmul(t[0], t[1])


def case_add_bias(rng):
    from faircl.autodiff import add_bias
    if rng.random() < 0.5:
        n, m = rng.integers(1, 6, size=2)
        return [rng.normal(size=(n, m)), rng.normal(size=m)], lambda t: add_bias(t[0], t[1])
    n, c, h, w = rng.integers(1, 4, size=4)
    return [rng.normal(size=(n, c, h, w)), rng.normal(size=c)], lambda t: add_bias(t[0], t[1])


def case_conv2d(rng):
    from faircl.autodiff import conv2d
    n, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k = int(rng.integers(1, 4))
    h, w = rng.integers(k, 7, size=2)
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    arrays = [rng.normal(size=(n, c, h, w)), rng.normal(size=(o, c, k, k)), rng.normal(size=o)]
    return arrays, lambda t: conv2d(t[0], t[1], t[2], stride=stride, padding=pad)


def case_maxpool2d(rng):
    from faircl.autodiff import maxpool2d
    n, c = rng.integers(1, 3), rng.integers(1, 4)
    k = int(rng.integers(2, 4))
    stride = int(rng.integers(1, k + 1))
    h, w = rng.integers(k, 8, size=2)
    return [_distinct(rng, (n, c, h, w))], lambda t: maxpool2d(t[0], k, stride)


def case_relu(rng):
    from faircl.autodiff import relu
    shape = tuple(rng.integers(1, 5, size=rng.integers(1, 5)))
    return [_away_from_zero(rng, shape)], lambda t: relu(t[0])


def case_batchnorm(rng):
    from faircl.autodiff import batchnorm
    # >= 3 values per channel: with 2, the normalised output is +-1 whatever the
    # input, the x-gradient is ~0 and central differences measure only noise
    if rng.random() < 0.5:
        shape = (int(rng.integers(3, 8)), int(rng.integers(1, 5)))
    else:
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4)))
    c = shape[1]
    arrays = [rng.normal(size=shape), rng.uniform(0.5, 1.5, size=c), rng.normal(size=c)]
    return arrays, lambda t: batchnorm(t[0], t[1], t[2], np.zeros(c), np.ones(c), training=True)


def case_dropout(rng):
    from faircl.autodiff import dropout
    shape = tuple(rng.integers(1, 6, size=2))
    rate = float(rng.uniform(0.1, 0.6))
    seed = int(rng.integers(1 << 30))
    # same mask on every evaluation
    return [rng.normal(size=shape)], lambda t: dropout(t[0], rate, True, np.random.default_rng(seed))


def case_flatten(rng):
    from faircl.autodiff import flatten
    return [rng.normal(size=tuple(rng.integers(1, 4, size=4)))], lambda t: flatten(t[0])


def case_add(rng):
    from faircl.autodiff import add
    shape = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
    return [rng.normal(size=shape), rng.normal(size=shape)], lambda t: add(t[0], t[1])


def case_mul(rng):
    from faircl.autodiff import mul
    shape = tuple(rng.integers(1, 5, size=rng.integers(1, 4)))
    return [rng.normal(size=shape), rng.normal(size=shape)], lambda t: mul(t[0], t[1])


def case_softmax_ce(rng):
    from faircl.autodiff import softmax_cross_entropy
    n, m = int(rng.integers(1, 7)), int(rng.integers(2, 6))
    y = rng.integers(0, m, size=n)
    w = rng.uniform(0.2, 3.0, size=n) if rng.random() < 0.5 else None
    return [3 * rng.normal(size=(n, m))], lambda t: softmax_cross_entropy(t[0], y, w)


def case_sigmoid_bce(rng):
    from faircl.autodiff import sigmoid_bce
    n, a = int(rng.integers(1, 7)), int(rng.integers(1, 6))
    y = rng.integers(0, 2, size=(n, a))
    w = rng.uniform(0.2, 3.0, size=n) if rng.random() < 0.5 else None
    return [3 * rng.normal(size=(n, a))], lambda t: sigmoid_bce(t[0], y, w)


def _shape(rng):
    return tuple(int(k) for k in rng.integers(1, 5, size=rng.integers(1, 4)))


def case_sub(rng):
    from faircl.autodiff import sub
    shape = _shape(rng)
    return [rng.normal(size=shape), rng.normal(size=shape)], lambda t: sub(t[0], t[1])


def case_scale(rng):
    from faircl.autodiff import scale
    c = float(rng.normal())
    return [rng.normal(size=_shape(rng))], lambda t: scale(t[0], c)


def case_total(rng):
    from faircl.autodiff import total
    return [rng.normal(size=_shape(rng))], lambda t: total(t[0])


def case_take_rows(rng):
    from faircl.autodiff import take_rows
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    idx = rng.integers(0, n, size=rng.integers(1, 8))  # repeats exercise the scatter-add
    return [rng.normal(size=(n, m))], lambda t: take_rows(t[0], idx)


def case_weighted_sq_dev(rng):
    from faircl.autodiff import weighted_sq_dev
    shape = _shape(rng)
    anchor, weight = rng.normal(size=shape), rng.uniform(0, 2, size=shape)
    return [rng.normal(size=shape)], lambda t: weighted_sq_dev(t[0], anchor, weight)


GRAD_CASES = {
    "matmul": case_matmul, "add_bias": case_add_bias, "conv2d": case_conv2d, "maxpool2d": case_maxpool2d,
    "relu": case_relu, "batchnorm": case_batchnorm, "dropout": case_dropout, "flatten": case_flatten,
    "add": case_add, "mul": case_mul, "softmax_cross_entropy": case_softmax_ce, "sigmoid_bce": case_sigmoid_bce,
    # differentiable helpers used by the penalty and per-domain heads
    "sub": case_sub, "scale": case_scale, "total": case_total, "take_rows": case_take_rows,
    "weighted_sq_dev": case_weighted_sq_dev,
}


def gradcheck(arrays, fn, rng):
    """Max relative error between reverse-mode and central-difference gradients of a random projection."""
    from faircl.autodiff import Tensor, backward, mul, total

    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(ts)
    proj = rng.normal(size=out.shape) if out.shape else None

    def objective(tensors):
        o = fn(tensors)
        return o if proj is None else total(mul(o, Tensor(proj)))

    backward(objective(ts))
    analytic = [t.grad for t in ts]
    numeric = fd_grad(lambda: float(objective([Tensor(a) for a in arrays]).data), arrays)
    return max(rel_err(a, n) for a, n in zip(analytic, numeric))


def gradcheck_suite(n_shapes=20, seed=0):
    """{case name: [rel err per random shape]} over every primitive and loss."""
    rng = np.random.default_rng(seed)
    return {name: [gradcheck(*build(rng), rng) for _ in range(n_shapes)] for name, build in GRAD_CASES.items()}

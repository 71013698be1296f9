"""Hot loops behind conv2d and maxpool2d.

Two interchangeable backends exist: numba-compiled loops (default when numba
imports) and a pure-numpy path. Set ``FAIRCL_NUMBA=0`` to force numpy, or call
:func:`use_backend` at runtime (tests and the benchmark do this).
"""

import os

from . import _numpy

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is optional
    _numba = None

_BACKENDS = {"numpy": _numpy}
if _numba is not None:
    _BACKENDS["numba"] = _numba


def _default_backend():
    flag = os.environ.get("FAIRCL_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or _numba is None:
        return "numpy"
    return "numba"


_active = _BACKENDS[_default_backend()]


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return "numba" if _active is _numba and _numba is not None else "numpy"


def use_backend(name):
    """Switch the kernel backend; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    prev = active_backend()
    _active = _BACKENDS[name]
    return prev


def im2col(x, kh, kw, stride, pad):
    return _active.im2col(x, kh, kw, stride, pad)


def col2im(cols, x_shape, kh, kw, stride, pad):
    return _active.col2im(cols, x_shape, kh, kw, stride, pad)


def maxpool_forward(x, k, stride):
    return _active.maxpool_forward(x, k, stride)


def maxpool_backward(grad, arg, x_shape, k, stride):
    return _active.maxpool_backward(grad, arg, x_shape, k, stride)

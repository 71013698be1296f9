"""Tensor, parameter containers and the reverse-mode sweep."""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from typing import Callable, Iterable, Optional

import numpy as np

WIDE = np.float64
NARROW = np.float32


class ShapeError(ValueError):
    """Raised when a primitive receives inputs with incompatible shapes."""

    def __init__(self, op: str, message: str, dims=None):
        self.op = op
        self.dims = dims
        detail = f" (dims: {dims})" if dims is not None else ""
        super().__init__(f"{op}: {message}{detail}")


class NumericError(ArithmeticError):
    """Raised when a primitive produces NaN or Inf."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: non-finite values in output")


class ContractError(RuntimeError):
    """A precondition of an engine operation was violated."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(WIDE)
    return arr


class Tensor:
    """Dense array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data = _as_array(data, dtype)
        if any(d <= 0 for d in self.data.shape):
            raise ShapeError("tensor", "all extents must be positive", self.data.shape)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._op: Optional[str] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    # operator sugar, used mostly in tests
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def make_node(op: str, data: np.ndarray, parents: tuple, backward_fn: Callable) -> Tensor:
    """Wrap a primitive's output, recording a graph edge when any parent needs grads.

    ``backward_fn(grad_out)`` must return one gradient (or None) per parent.
    """
    if not np.all(np.isfinite(data)):
        raise NumericError(op)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = parents
        out._backward = backward_fn
        out._op = op
    return out


def _topological(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Optional["ParameterSet"] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Interior nodes are released afterwards, so a graph can be swept once.
    When ``params`` is given, members the loss does not reach get zero grads.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(_topological(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
            node._parents = ()
            node._backward = None
    if params is not None:
        for t in params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


class ParameterSet:
    """Ordered name -> Tensor mapping of trainable tensors."""

    def __init__(self, entries: Optional[Iterable[tuple[str, Tensor]]] = None):
        self._entries: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, t in entries or ():
            self.add(name, t)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        tensor.name = name
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def values(self):
        return self._entries.values()

    def items(self):
        return self._entries.items()

    @property
    def total_count(self) -> int:
        return sum(t.size for t in self._entries.values())

    def subset(self, names: Iterable[str]) -> "ParameterSet":
        sub = ParameterSet()
        for n in names:
            sub._entries[n] = self._entries[n]
        return sub

    def zero_grad(self):
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._entries.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in self._entries.items()}

    def load(self, values: dict[str, np.ndarray]):
        for n, t in self._entries.items():
            t.data[...] = values[n]

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([t.data.reshape(-1) for t in self._entries.values()])

    def checksum(self, name: Optional[str] = None) -> str:
        h = hashlib.sha256()
        items = [(name, self._entries[name])] if name is not None else self._entries.items()
        for n, t in items:
            h.update(n.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()[:16]

    def checksum_lines(self, step: int) -> list[str]:
        """Debug dump lines ``step,param_name,checksum``."""
        return [f"{step},{n},{self.checksum(n)}" for n in self._entries]


def finite_difference_gradient(f: Callable[[ParameterSet], float], params: ParameterSet,
                               h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central-difference estimate of df/dθ for every coordinate of every parameter."""
    if h <= 0:
        raise ValueError("step h must be positive")
    out = {}
    for name, t in params.items():
        flat = t.data.reshape(-1)
        g = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params))
            flat[i] = orig - h
            fm = float(f(params))
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        out[name] = g.reshape(t.shape)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative error |a - b| / max(|a|, |b|)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, ParameterSet


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer kind must be 'sgd' or 'adam', got {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def optimizer_step(params: ParameterSet, state: OptimizerState) -> tuple[ParameterSet, OptimizerState]:
    """Apply one in-place update from the populated grads, then zero them."""
    missing = [n for n, t in params.items() if t.grad is None]
    if missing:
        raise ContractError(f"optimizer_step: no gradient for {missing}")
    lr = state.learning_rate
    state.step_count += 1
    if state.kind == "sgd":
        for t in params.values():
            t.data -= (lr * t.grad).astype(t.dtype)
    else:
        b1, b2 = state.beta1, state.beta2
        c1 = 1.0 - b1 ** state.step_count
        c2 = 1.0 - b2 ** state.step_count
        for name, t in params.items():
            if name not in state.m:
                state.m[name] = np.zeros_like(t.data)
                state.v[name] = np.zeros_like(t.data)
            m, v, g = state.m[name], state.v[name], t.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            t.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)).astype(t.dtype)
    params.zero_grad()
    return params, state

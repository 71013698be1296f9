"""Importance estimates and quadratic anchoring penalties (EWC, EWC-Online, SI, MAS)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..autodiff import ContractError, ParameterSet, Tensor, add, backward, mul, scale, total, weighted_sq_dev

METHODS = ("none", "ewc", "ewc_online", "si", "mas", "naive_rehearsal")
STATE_VERSION = 1


@dataclass
class MethodConfig:
    lam: float = 100.0
    gamma: float = 1.0
    xi: float = 0.1
    c: float = 1.0
    buffer_capacity: int = 500
    fisher_sample_cap: int = 1024

    def __post_init__(self):
        if self.lam < 0 or self.c < 0:
            raise ValueError("penalty strengths must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.buffer_capacity < 0 or self.fisher_sample_cap < 1:
            raise ValueError("buffer_capacity must be >= 0 and fisher_sample_cap >= 1")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "MethodConfig":
        base = {"mas": {"lam": 1.0}}.get(method, {})
        base.update(overrides)
        return cls(**base)


@dataclass
class RegularizerState:
    method: str
    hyper: MethodConfig = field(default_factory=MethodConfig)
    anchors: list = field(default_factory=list)  # (episode id, {name: array})
    importances: list = field(default_factory=list)  # one {name: array} per anchor
    si_omega: Optional[dict] = None
    si_start: Optional[dict] = None
    buffer: object = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")

    @property
    def running_fisher(self) -> Optional[dict]:
        if self.method != "ewc_online" or not self.importances:
            return None
        return self.importances[0]

    @property
    def strength(self) -> float:
        """Multiplier in front of sum_i Omega_i (theta_i - theta*_i)^2."""
        if self.method == "si":
            return self.hyper.c
        if self.method in ("ewc", "ewc_online", "mas"):
            return self.hyper.lam / 2.0
        return 0.0

    def active(self) -> bool:
        return bool(self.anchors) and self.strength > 0


def _check_data(n: int, what: str):
    if n == 0:
        raise ContractError(f"{what}: empty data")


def consolidate_ewc(model, x, y, domains=None, cap: int = 1024):
    """Empirical diagonal Fisher: mean squared per-sample grad of log p(y | x) at the current parameters.

    Uses the first ``min(cap, n)`` samples, eval mode. Returns ``(anchor, fisher)``.
    """
    n = min(cap, len(x))
    _check_data(n, "consolidate_ewc")
    params = model.params
    fisher = {name: np.zeros_like(t.data, dtype=np.float64) for name, t in params.items()}
    # the AU loss averages over output units while log p sums over them
    units = model.spec.head_width if model.spec.task == "au" else 1
    for i in range(n):
        params.zero_grad()
        d = None if domains is None else np.asarray(domains)[i:i + 1]
        # the per-sample loss is -log p(y|x); squaring removes the sign
        nll = model.loss(np.asarray(x)[i:i + 1], np.asarray(y)[i:i + 1], d, training=False)
        backward(nll, params)
        for name, t in params.items():
            g = t.grad.astype(np.float64) * units
            fisher[name] += g * g
    params.zero_grad()
    for name in fisher:
        fisher[name] /= n
    return params.snapshot(), fisher


def consolidate_mas(model, x, cap: int = 1024):
    """Mean over inputs of |d ||f(x)||^2 / d theta| with f the raw logits. Labels are never read."""
    n = min(cap, len(x))
    _check_data(n, "consolidate_mas")
    params = model.params
    omega = {name: np.zeros_like(t.data, dtype=np.float64) for name, t in params.items()}
    x = np.asarray(x)
    for i in range(n):
        params.zero_grad()
        z = model.logits(x[i:i + 1], training=False)
        backward(total(mul(z, z)), params)
        for name, t in params.items():
            omega[name] += np.abs(t.grad.astype(np.float64))
    params.zero_grad()
    for name in omega:
        omega[name] /= n
    return params.snapshot(), omega


def add_ewc_anchor(state: RegularizerState, episode: int, anchor: dict, fisher: dict) -> RegularizerState:
    state.anchors.append((episode, anchor))
    state.importances.append(fisher)
    return state


def update_ewc_online(state: RegularizerState, fisher_new: dict, anchor: dict, gamma: Optional[float] = None,
                      episode: int = 0) -> RegularizerState:
    """running_fisher <- gamma * running_fisher + F_new; the single anchor moves to ``anchor``."""
    gamma = state.hyper.gamma if gamma is None else gamma
    if state.importances:
        old = state.importances[0]
        running = {n: gamma * old[n] + fisher_new[n] for n in fisher_new}
    else:
        running = {n: np.array(v, dtype=np.float64) for n, v in fisher_new.items()}
    state.anchors = [(episode, anchor)]
    state.importances = [running]
    return state


def accumulate_importance(state: RegularizerState, omega_new: dict, anchor: dict, episode: int = 0):
    """Additive single-anchor update used by MAS."""
    if state.importances:
        old = state.importances[0]
        omega_new = {n: old[n] + omega_new[n] for n in omega_new}
    state.anchors = [(episode, anchor)]
    state.importances = [omega_new]
    return state


def penalty_quadratic(state: RegularizerState, params: ParameterSet) -> Tensor:
    """strength * sum over anchors and coordinates of Omega * (theta - anchor)^2."""
    if not state.anchors:
        return Tensor(np.zeros(()))
    terms = None
    for (_, anchor), imp in zip(state.anchors, state.importances):
        if set(anchor) != set(params.names()):
            raise ContractError("regularizer state and parameters have different names")
        for name, t in params.items():
            a = np.asarray(anchor[name], dtype=t.dtype)
            w = np.asarray(imp[name], dtype=t.dtype)
            if a.shape != t.shape:
                raise ContractError(f"anchor shape {a.shape} != parameter {name} shape {t.shape}")
            term = weighted_sq_dev(t, a, w)
            terms = term if terms is None else add(terms, term)
    return scale(terms, state.strength)


# synaptic intelligence ---------------------------------------------------

def si_begin_episode(state: RegularizerState, params: ParameterSet) -> RegularizerState:
    state.si_omega = {n: np.zeros(t.shape, dtype=np.float64) for n, t in params.items()}
    state.si_start = params.snapshot()
    return state


def si_accumulate_step(state: RegularizerState, task_grad: dict, delta: dict) -> RegularizerState:
    """omega += -g * delta_theta, with g the task-loss gradient (no penalty term)."""
    for n, g in task_grad.items():
        state.si_omega[n] -= np.asarray(g, dtype=np.float64) * np.asarray(delta[n], dtype=np.float64)
    return state


def si_consolidate(state: RegularizerState, params: ParameterSet, episode: int = 0) -> RegularizerState:
    """Omega += max(omega, 0) / ((theta - theta_start)^2 + xi); then reset omega and the episode start."""
    xi = state.hyper.xi
    cur = params.snapshot()
    contrib = {}
    for n, w in state.si_omega.items():
        disp = cur[n].astype(np.float64) - state.si_start[n].astype(np.float64)
        contrib[n] = np.maximum(w, 0.0) / (disp * disp + xi)
    if state.importances:
        contrib = {n: state.importances[0][n] + contrib[n] for n in contrib}
    state.importances = [contrib]
    state.anchors = [(episode, cur)]
    return si_begin_episode(state, params)


# serialization -----------------------------------------------------------

def save_state(state: RegularizerState, path) -> None:
    """Versioned .npz snapshot: one array per (kind, index, parameter name) plus JSON metadata."""
    arrays = {}
    for k, ((ep, anchor), imp) in enumerate(zip(state.anchors, state.importances)):
        for n, v in anchor.items():
            arrays[f"anchor/{k}/{n}"] = v
        for n, v in imp.items():
            arrays[f"importance/{k}/{n}"] = v
    for tag, d in (("si_omega", state.si_omega), ("si_start", state.si_start)):
        for n, v in (d or {}).items():
            arrays[f"{tag}/{n}"] = v
    meta = {"version": STATE_VERSION, "method": state.method, "hyper": asdict(state.hyper),
            "episodes": [ep for ep, _ in state.anchors]}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_state(path) -> RegularizerState:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported regularizer snapshot version {meta.get('version')}")
        state = RegularizerState(meta["method"], MethodConfig(**meta["hyper"]))
        for k, ep in enumerate(meta["episodes"]):
            pre_a, pre_i = f"anchor/{k}/", f"importance/{k}/"
            state.anchors.append((ep, {key[len(pre_a):]: z[key] for key in z.files if key.startswith(pre_a)}))
            state.importances.append({key[len(pre_i):]: z[key] for key in z.files if key.startswith(pre_i)})
        for tag in ("si_omega", "si_start"):
            d = {key[len(tag) + 1:]: z[key] for key in z.files if key.startswith(tag + "/")}
            setattr(state, tag, d or None)
    return state

"""Baseline CNN, MLP backbone and the standard / DDC / DIC output heads."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import (
    NARROW,
    ParameterSet,
    ShapeError,
    Tensor,
    add,
    add_bias,
    batchnorm,
    conv2d,
    dropout,
    flatten,
    matmul,
    maxpool2d,
    relu,
    scale,
    sigmoid,
    sigmoid_bce,
    softmax,
    softmax_cross_entropy,
    take_rows,
)

TASKS = ("expression", "au")
HEAD_KINDS = ("standard", "ddc", "dic")


@dataclass(frozen=True)
class HeadSpec:
    kind: str = "standard"
    num_domains: int = 1
    ddc_rule: str = "sum"

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"head kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        if self.num_domains < 1:
            raise ValueError("num_domains must be positive")
        if self.ddc_rule not in ("sum", "max"):
            raise ValueError("ddc_rule must be 'sum' or 'max'")


@dataclass(frozen=True)
class ModelSpec:
    """What to build.

    ``input_shape`` is ``(C, H, W)`` for images or ``(D,)`` for vectors;
    ``num_outputs`` is M classes (expression) or A units (au).
    """

    input_shape: tuple
    num_outputs: int
    task: str = "expression"
    backbone: str = "mlp"
    head: HeadSpec = field(default_factory=HeadSpec)
    hidden: tuple = (512, 256)
    channels: tuple = (32, 64, 128, 256)
    conv_dropout: float = 0.25
    dense_dropout: float = 0.5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.task == "expression" and self.num_outputs < 2:
            raise ValueError("expression task needs at least 2 classes")
        if self.task == "au" and self.num_outputs < 1:
            raise ValueError("au task needs at least 1 unit")
        if any(int(d) <= 0 for d in self.input_shape):
            raise ValueError("input dimensions must be positive")
        if self.backbone not in ("mlp", "baseline_cnn"):
            raise ValueError(f"unknown backbone {self.backbone!r}")

    @property
    def input_kind(self) -> str:
        return "image" if len(self.input_shape) == 3 else "vector"

    @property
    def head_width(self) -> int:
        if self.head.kind == "ddc":
            return self.head.num_domains * self.num_outputs
        return self.num_outputs

    @property
    def num_heads(self) -> int:
        return self.head.num_domains if self.head.kind == "dic" else 1


# layers -------------------------------------------------------------------

class Layer:
    kind = "layer"
    name = ""

    def params(self) -> list[tuple[str, Tensor]]:
        return []

    def forward(self, x: Tensor, training: bool, rng) -> Tensor:
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, fan_in, fan_out, rng, dtype):
        self.name = name
        bound = np.sqrt(6.0 / fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), dtype=dtype)
        self.bias = Tensor(np.zeros(fan_out), dtype=dtype)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x, training=False, rng=None):
        return add_bias(matmul(x, self.weight), self.bias)


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, name, in_ch, out_ch, rng, dtype, kernel=3, padding=1):
        self.name = name
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel, kernel)), dtype=dtype)
        self.bias = Tensor(np.zeros(out_ch), dtype=dtype)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x, training=False, rng=None):
        return conv2d(x, self.weight, self.bias, stride=1, padding=self.padding)


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name):
        self.name = name

    def forward(self, x, training=False, rng=None):
        return relu(x)


class MaxPool2d(Layer):
    kind = "pool"

    def __init__(self, name, kernel=2):
        self.name = name
        self.kernel = kernel

    def forward(self, x, training=False, rng=None):
        return maxpool2d(x, self.kernel)


class BatchNorm(Layer):
    kind = "bn"

    def __init__(self, name, features, dtype, momentum=0.1):
        self.name = name
        self.momentum = momentum
        self.gamma = Tensor(np.ones(features), dtype=dtype)
        self.beta = Tensor(np.zeros(features), dtype=dtype)
        self.running_mean = np.zeros(features, dtype=dtype)
        self.running_var = np.ones(features, dtype=dtype)

    def params(self):
        return [(f"{self.name}.gamma", self.gamma), (f"{self.name}.beta", self.beta)]

    def forward(self, x, training=False, rng=None):
        return batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var, training, self.momentum)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, name, rate):
        self.name = name
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        return dropout(x, self.rate, training, rng)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name):
        self.name = name

    def forward(self, x, training=False, rng=None):
        return flatten(x)


# model --------------------------------------------------------------------

class Model:
    """Shared backbone plus one (standard, ddc) or N (dic) final dense heads."""

    def __init__(self, spec: ModelSpec, backbone: list[Layer], heads: list[Dense], dtype):
        self.spec = spec
        self.backbone = backbone
        self.heads = heads
        self.dtype = np.dtype(dtype)
        self.params = ParameterSet()
        for layer in backbone + heads:
            for name, t in layer.params():
                self.params.add(name, t)

    @property
    def layers(self) -> list[Layer]:
        return self.backbone + self.heads

    def head_param_names(self, k: int) -> list[str]:
        return [n for n, _ in self.heads[k].params()]

    def backbone_param_names(self) -> list[str]:
        return [n for layer in self.backbone for n, _ in layer.params()]

    def _input(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x), dtype=self.dtype)

    def features(self, x, training: bool = False, rng=None) -> Tensor:
        h = self._input(x)
        for layer in self.backbone:
            h = layer.forward(h, training, rng)
        return h

    def logits(self, x, training: bool = False, rng=None, domains=None) -> Tensor:
        """Raw head outputs. DIC needs ``domains`` to route rows to their heads."""
        feats = self.features(x, training, rng)
        if self.spec.head.kind != "dic":
            return self.heads[0].forward(feats)
        if domains is None:
            raise ValueError("DIC model needs per-sample domain indices")
        # numpy-level routing; use loss() for a differentiable routed forward
        domains = np.asarray(domains)
        out = np.zeros((feats.shape[0], self.spec.num_outputs), dtype=self.dtype)
        for k in np.unique(domains):
            idx = np.flatnonzero(domains == k)
            out[idx] = dic_select_head(self, int(k))(take_rows(feats, idx)).data
        return Tensor(out)

    def loss(self, x, y, domains=None, weights=None, training: bool = True, rng=None) -> Tensor:
        """Task loss for a batch, dispatching on head kind and task."""
        kind = self.spec.head.kind
        y = np.asarray(y)
        if kind == "standard":
            return _task_loss(self.spec.task, self.logits(x, training, rng), y, weights)
        domains = np.asarray(domains, dtype=np.int64)
        if kind == "ddc":
            z = self.logits(x, training, rng)
            m = self.spec.num_outputs
            if self.spec.task == "expression":
                joint = ddc_joint_index(domains, y, m, self.spec.head.num_domains)
                return softmax_cross_entropy(z, joint, weights)
            target = np.zeros(z.shape, dtype=np.int64)
            for i, d in enumerate(domains):
                target[i, d * m:(d + 1) * m] = y[i]
            return sigmoid_bce(z, target, weights)
        feats = self.features(x, training, rng)
        n = feats.shape[0]
        total_loss = None
        for k in np.unique(domains):
            idx = np.flatnonzero(domains == k)
            w = None if weights is None else np.asarray(weights)[idx]
            part = _task_loss(self.spec.task, dic_select_head(self, int(k))(take_rows(feats, idx)), y[idx], w)
            part = scale(part, len(idx) / n)
            total_loss = part if total_loss is None else add(total_loss, part)
        return total_loss

    def scores(self, x, domains=None) -> np.ndarray:
        """Eval-mode class probabilities (expression) or unit probabilities (au), per row."""
        z = self.logits(x, training=False, domains=domains).data
        if self.spec.head.kind == "ddc":
            m = self.spec.num_outputs
            if self.spec.task == "expression":
                return ddc_reduce(softmax(z), m, self.spec.head.ddc_rule)
            p = sigmoid(z)
            return np.clip(ddc_reduce(p, m, self.spec.head.ddc_rule), 0.0, 1.0)
        return softmax(z) if self.spec.task == "expression" else sigmoid(z)

    def predict(self, x, domains=None, threshold: float = 0.5) -> np.ndarray:
        if self.spec.head.kind == "ddc":
            s = self.scores(x, domains)
            return predict_expression(s) if self.spec.task == "expression" else (s >= threshold).astype(np.int64)
        z = self.logits(x, training=False, domains=domains).data
        return predict_expression(z) if self.spec.task == "expression" else predict_au(z, threshold)

    def summary(self) -> list[tuple[str, tuple, int]]:
        """(layer name, output shape without batch, parameter count) per layer."""
        rows = []
        h = Tensor(np.zeros((1,) + tuple(self.spec.input_shape)), dtype=self.dtype)
        for layer in self.backbone:
            h = layer.forward(h, False, None)
            rows.append((layer.name, tuple(h.shape[1:]), sum(t.size for _, t in layer.params())))
        for head in self.heads:
            z = head.forward(h)
            rows.append((head.name, tuple(z.shape[1:]), sum(t.size for _, t in head.params())))
        return rows

    def summary_text(self) -> str:
        lines = [f"{'layer':<24}{'output':<20}{'params':>10}"]
        for name, shape, count in self.summary():
            lines.append(f"{name:<24}{'x'.join(map(str, shape)):<20}{count:>10}")
        lines.append(f"{'total':<44}{self.params.total_count:>10}")
        return "\n".join(lines)


def _task_loss(task, z, y, weights):
    if task == "expression":
        return softmax_cross_entropy(z, y, weights)
    return sigmoid_bce(z, y, weights)


def _heads(spec: ModelSpec, fan_in: int, rng, dtype) -> list[Dense]:
    if spec.head.kind == "dic":
        return [Dense(f"head{k}", fan_in, spec.num_outputs, rng, dtype) for k in range(spec.head.num_domains)]
    return [Dense("head", fan_in, spec.head_width, rng, dtype)]


def build_baseline_cnn(spec: ModelSpec, seed: int = 0, dtype=NARROW) -> Model:
    """Four [conv, conv, pool, bn, dropout] blocks, flatten, then dense layers ending in the head.

    ``spec.hidden`` lists the hidden dense widths (two by default, so three
    dense layers counting the head). 3x3 convs use padding 1, so only the
    pools shrink the map.
    """
    if spec.input_kind != "image":
        raise ValueError("baseline CNN needs an image input (C, H, W)")
    if len(spec.channels) != 4:
        raise ValueError("channel plan must list 4 block widths")
    c, h, w = spec.input_shape
    if h // 16 < 1 or w // 16 < 1:
        raise ShapeError("build_baseline_cnn", "input too small to survive 4 poolings", (h, w))
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    in_ch = c
    for b, out_ch in enumerate(spec.channels, start=1):
        layers += [
            Conv2d(f"block{b}.conv1", in_ch, out_ch, rng, dtype), ReLU(f"block{b}.relu1"),
            Conv2d(f"block{b}.conv2", out_ch, out_ch, rng, dtype), ReLU(f"block{b}.relu2"),
            MaxPool2d(f"block{b}.pool"),
            BatchNorm(f"block{b}.bn", out_ch, dtype, spec.bn_momentum),
            Dropout(f"block{b}.dropout", spec.conv_dropout),
        ]
        in_ch = out_ch
        h, w = h // 2, w // 2
    layers.append(Flatten("flatten"))
    fan_in = in_ch * h * w
    for i, width in enumerate(spec.hidden, start=1):
        layers += [Dense(f"fc{i}", fan_in, width, rng, dtype), ReLU(f"fc{i}.relu"),
                   Dropout(f"fc{i}.dropout", spec.dense_dropout)]
        fan_in = width
    return Model(spec, layers, _heads(spec, fan_in, rng, dtype), dtype)


def build_mlp(spec: ModelSpec, seed: int = 0, dtype=NARROW, dropout_rate: float = 0.0,
              allow_linear: bool = True) -> Model:
    """Dense + ReLU stack over a vector input; an empty ``hidden`` gives a linear model."""
    if spec.input_kind != "vector":
        raise ValueError("MLP needs a vector input (D,)")
    if not spec.hidden and not allow_linear:
        raise ValueError("hidden layer list is empty")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    fan_in = int(spec.input_shape[0])
    for i, width in enumerate(spec.hidden, start=1):
        layers += [Dense(f"fc{i}", fan_in, int(width), rng, dtype), ReLU(f"fc{i}.relu")]
        if dropout_rate > 0:
            layers.append(Dropout(f"fc{i}.dropout", dropout_rate))
        fan_in = int(width)
    return Model(spec, layers, _heads(spec, fan_in, rng, dtype), dtype)


def build_model(spec: ModelSpec, seed: int = 0, dtype=NARROW) -> Model:
    if spec.backbone == "baseline_cnn":
        return build_baseline_cnn(spec, seed, dtype)
    return build_mlp(spec, seed, dtype)


# prediction rules ---------------------------------------------------------

def _raw(z) -> np.ndarray:
    return z.data if isinstance(z, Tensor) else np.asarray(z)


def predict_expression(logits) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest index."""
    return np.argmax(_raw(logits), axis=1)


def predict_au(logits, threshold: float = 0.5) -> np.ndarray:
    """1 where sigmoid(logit) >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (sigmoid(_raw(logits)) >= threshold).astype(np.int64)


def ddc_joint_index(domain, cls, m: int, n: Optional[int] = None):
    """Flatten (domain, class) to ``domain * m + class``. Works elementwise on arrays."""
    d = np.asarray(domain, dtype=np.int64)
    c = np.asarray(cls, dtype=np.int64)
    if (c < 0).any() or (c >= m).any():
        raise IndexError(f"class index out of range [0, {m})")
    if (d < 0).any() or (n is not None and (d >= n).any()):
        raise IndexError(f"domain index out of range [0, {n})")
    out = d * m + c
    return int(out) if out.ndim == 0 else out


def ddc_reduce(joint_probs, m: int, rule: str = "sum") -> np.ndarray:
    """Collapse (batch, N*M) joint scores to (batch, M) by summing (or maxing) over domains."""
    p = _raw(joint_probs)
    if p.ndim != 2 or p.shape[1] % m:
        raise ShapeError("ddc_reduce", f"width must be a multiple of M={m}", p.shape)
    blocks = p.reshape(p.shape[0], -1, m)
    if rule == "sum":
        return blocks.sum(axis=1)
    if rule == "max":
        return blocks.max(axis=1)
    raise ValueError(f"unknown reduction rule {rule!r}")


def dic_select_head(model: Model, domain: int) -> Callable[[Tensor], Tensor]:
    if model.spec.head.kind != "dic":
        raise ValueError("dic_select_head needs a DIC model")
    if not 0 <= domain < len(model.heads):
        raise IndexError(f"domain {domain} has no head (model has {len(model.heads)})")
    return model.heads[domain].forward


def layer_kinds(model: Model) -> list[str]:
    return [layer.kind for layer in model.layers]

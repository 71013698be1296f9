"""Experiment configuration: YAML file -> validated :class:`ExperimentConfig`.

Example::

    dataset:
      synth: {num_domains: 2, num_classes: 5, shift: 1.4, seed: 0}
    task: expression
    attribute: domain
    methods: [finetune, offline, si]
    augmentation: off          # off | on | both
    seeds: [1, 2, 3]
    model: {backbone: mlp, hidden: [64, 64]}
    train: {epochs: 20, batch_size: 32, learning_rate: 0.001}
    hyper:
      si: {c: 10}
    sweeps:
      ewc: default             # or an explicit list of values
    output: out

Precedence for the output directory is command-line flag, then the
``FAIRCL_OUT`` environment variable, then the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from ..continual.regularizers import MethodConfig
from ..data.synth import SynthConfig

ALL_METHODS = ("finetune", "offline", "ddc", "dic", "strategic_sampling",
               "ewc", "ewc_online", "si", "mas", "naive_rehearsal")
CL_METHODS = ("ewc", "ewc_online", "si", "mas", "naive_rehearsal")
AUGMENTATION = ("off", "on", "both")

# which MethodConfig field a sweep varies, and the default grid
SWEEP_FIELD = {"ewc": "lam", "ewc_online": "lam", "mas": "lam", "si": "c"}
DEFAULT_SWEEPS = {
    "ewc": [1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
    "ewc_online": [1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
    "si": [0.1, 1.0, 10.0, 100.0, 1000.0],
    "mas": [0.01, 0.1, 1.0, 10.0],
}
VALIDATION_FRACTION = 0.2


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass
class TrainSettings:
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "adam"
    learning_rate: float = 1e-3


@dataclass
class ModelSettings:
    backbone: Optional[str] = None  # None: mlp for vectors, baseline_cnn for images
    hidden: tuple = (64, 64)
    dropout: float = 0.0
    ddc_rule: str = "sum"


@dataclass
class ExperimentConfig:
    dataset: dict
    task: str = "expression"
    attribute: str = "domain"
    methods: tuple = ("finetune", "offline")
    augmentation: str = "off"
    seeds: tuple = (1, 2, 3)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    hyper: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)
    order: object = "descending"
    output: str = "out"
    base_dir: str = "."

    @property
    def aug_settings(self) -> list[bool]:
        return {"off": [False], "on": [True], "both": [False, True]}[self.augmentation]

    def method_config(self, method: str, **override) -> MethodConfig:
        base = dict(self.hyper.get(method, {}))
        base.update(override)
        return MethodConfig.for_method(method, **base)

    def dataset_identity(self) -> dict:
        """Dataset description used in cell hashes (manifest paths made absolute)."""
        d = dict(self.dataset)
        if "manifest" in d:
            d["manifest"] = str(Path(self.base_dir, d["manifest"]).resolve())
        return d


def _number(v):
    # YAML 1.1 leaves exponent literals without a dot (1e7) as strings
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(path, msg)


def _known(section: dict, allowed, path: str):
    for key in section:
        _require(key in allowed, f"{path}.{key}" if path else key, "unknown key")


def _dataclass_section(cls, raw, path: str):
    if raw is None:
        return cls()
    _require(isinstance(raw, dict), path, "must be a mapping")
    names = {f.name for f in fields(cls)}
    _known(raw, names, path)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _augmentation(raw) -> str:
    # YAML 1.1 reads bare on/off as booleans
    if raw is True:
        return "on"
    if raw is False:
        return "off"
    _require(raw in AUGMENTATION, "augmentation", f"must be one of {AUGMENTATION}")
    return raw


def _dataset(raw) -> dict:
    _require(isinstance(raw, dict), "dataset", "must be a mapping")
    has_synth, has_manifest = "synth" in raw, "manifest" in raw
    _require(has_synth != has_manifest, "dataset", "give exactly one of 'synth' or 'manifest'")
    if has_synth:
        _known(raw, {"synth"}, "dataset")
        synth = raw["synth"] or {}
        _require(isinstance(synth, dict), "dataset.synth", "must be a mapping")
        _known(synth, {f.name for f in fields(SynthConfig)}, "dataset.synth")
        try:
            cfg = make_synth_config(synth)
        except (TypeError, ValueError) as exc:
            raise ConfigError("dataset.synth", str(exc)) from None
        return {"synth": cfg.to_dict()}
    allowed = {"manifest", "num_classes", "num_units", "channels", "image_size", "test_fraction", "split_seed"}
    _known(raw, allowed, "dataset")
    _require(isinstance(raw["manifest"], str) and raw["manifest"], "dataset.manifest", "must be a path")
    return dict(raw)


def make_synth_config(d: dict) -> SynthConfig:
    d = dict(d)
    for key in ("imbalance", "domain_names"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return SynthConfig(**d)


def validate(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    """Turn a parsed mapping into an ExperimentConfig or raise ConfigError."""
    _require(isinstance(raw, dict), "<root>", "config must be a mapping")
    top = {"dataset", "task", "attribute", "methods", "augmentation", "seeds", "model", "train",
           "hyper", "sweeps", "order", "output"}
    _known(raw, top, "")
    _require("dataset" in raw, "dataset", "missing")
    dataset = _dataset(raw["dataset"])

    task = raw.get("task", "expression")
    _require(task in ("expression", "au"), "task", "must be 'expression' or 'au'")
    if "synth" in dataset:
        _require(dataset["synth"]["task"] == task, "dataset.synth.task", f"does not match task {task!r}")

    attribute = raw.get("attribute", "domain")
    _require(isinstance(attribute, str) and attribute and "," not in attribute, "attribute",
             "must be a non-empty string without commas")

    methods = raw.get("methods", ["finetune", "offline"])
    _require(isinstance(methods, list) and len(methods) >= 1, "methods", "must be a non-empty list")
    for i, m in enumerate(methods):
        _require(m in ALL_METHODS, f"methods[{i}]", f"unknown method {m!r}")
    _require(len(set(methods)) == len(methods), "methods", "duplicate method")

    seeds = raw.get("seeds", [1, 2, 3])
    _require(isinstance(seeds, list) and len(seeds) >= 1, "seeds", "must be a non-empty list")
    _require(all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds), "seeds",
             "must be non-negative integers")
    _require(len(set(seeds)) == len(seeds), "seeds", "must be distinct")

    model = _dataclass_section(ModelSettings, raw.get("model"), "model")
    _require(model.backbone in (None, "mlp", "baseline_cnn"), "model.backbone", "must be mlp or baseline_cnn")
    _require(model.ddc_rule in ("sum", "max"), "model.ddc_rule", "must be sum or max")
    _require(0.0 <= model.dropout < 1.0, "model.dropout", "must lie in [0, 1)")
    model.hidden = tuple(int(h) for h in model.hidden)

    train = _dataclass_section(TrainSettings, raw.get("train"), "train")
    _require(isinstance(train.epochs, int) and train.epochs >= 1, "train.epochs", "must be a positive integer")
    _require(isinstance(train.batch_size, int) and train.batch_size >= 1, "train.batch_size",
             "must be a positive integer")
    _require(train.optimizer in ("adam", "sgd"), "train.optimizer", "must be adam or sgd")
    train.learning_rate = _number(train.learning_rate)
    _require(isinstance(train.learning_rate, (int, float)) and train.learning_rate > 0, "train.learning_rate", "must be positive")
    train.learning_rate = float(train.learning_rate)

    hyper = dict(raw.get("hyper") or {})
    _require(isinstance(hyper, dict), "hyper", "must be a mapping")
    mc_fields = {f.name for f in fields(MethodConfig)}
    for m, vals in hyper.items():
        _require(m in ALL_METHODS, f"hyper.{m}", "unknown method")
        _require(isinstance(vals, dict), f"hyper.{m}", "must be a mapping")
        _known(vals, mc_fields, f"hyper.{m}")
        vals = hyper[m] = {k: _number(v) for k, v in vals.items()}
        try:
            MethodConfig.for_method(m, **vals)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"hyper.{m}", str(exc)) from None

    sweeps = {}
    for m, grid in (raw.get("sweeps") or {}).items():
        _require(m in SWEEP_FIELD, f"sweeps.{m}", f"sweeps exist only for {sorted(SWEEP_FIELD)}")
        if grid == "default":
            grid = DEFAULT_SWEEPS[m]
        _require(isinstance(grid, list) and grid, f"sweeps.{m}", "must be 'default' or a non-empty list")
        grid = [_number(v) for v in grid]
        _require(all(isinstance(v, (int, float)) and v >= 0 for v in grid), f"sweeps.{m}",
                 "values must be non-negative numbers")
        sweeps[m] = [float(v) for v in grid]

    order = raw.get("order", "descending")
    _require(order in ("descending", "ascending", "name") or isinstance(order, list), "order",
             "must be descending, ascending, name or a list of domains")

    output = raw.get("output", "out")
    _require(isinstance(output, str) and output, "output", "must be a path")

    return ExperimentConfig(dataset, task, attribute, tuple(methods), _augmentation(raw.get("augmentation", "off")),
                            tuple(seeds), model, train, hyper, sweeps, order, output, str(base_dir))


def load_config(path, out: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    cfg = validate(raw if raw is not None else {}, base_dir=str(path.parent))
    env = os.environ.get("FAIRCL_OUT")
    if out:
        cfg.output = out
    elif env:
        cfg.output = env
    if not Path(cfg.output).is_absolute() and not (out or env):
        cfg.output = str(path.parent / cfg.output)
    return cfg

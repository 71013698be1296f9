"""Domain-incremental and offline training loops."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autodiff import OptimizerState, backward, optimizer_step
from ..data.augment import AugmentConfig, augment_batch
from ..data.samples import Arrays, Episode, concat, stack
from ..fairness import AccuracyTable, per_domain_accuracy, records_from_arrays
from .regularizers import (
    MethodConfig,
    RegularizerState,
    accumulate_importance,
    add_ewc_anchor,
    consolidate_ewc,
    consolidate_mas,
    penalty_quadratic,
    si_accumulate_step,
    si_begin_episode,
    si_consolidate,
    update_ewc_online,
)
from .replay import ReplayBuffer, buffer_insert_arrays, buffer_minibatch


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    augment: AugmentConfig = field(default_factory=lambda: AugmentConfig(enabled=False))
    reset_optimizer: bool = True
    trainable: Optional[tuple] = None  # parameter names to update; None = all
    checksum_log: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class EpisodeLog:
    episode: int
    domain: str
    epochs: int
    task_loss: float
    penalty: float
    accuracy: dict
    warning: Optional[str] = None


@dataclass
class TrainingHistory:
    seed: int
    method: str
    episodes: list = field(default_factory=list)

    def accuracy_after(self, episode: int, domain: str) -> float:
        return self.episodes[episode].accuracy[domain]

    def final_accuracy(self) -> dict:
        return dict(self.episodes[-1].accuracy)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "method": self.method, "episodes": [vars(e).copy() for e in self.episodes]}


def strategic_weights(counts: dict) -> dict:
    """Per-domain loss weights N_total / (K * n_d); the sample-weighted mean is 1."""
    if not counts:
        raise ValueError("no domain counts")
    bad = [d for d, n in counts.items() if n <= 0]
    if bad:
        raise ValueError(f"domain {bad[0]!r} has no samples")
    total = sum(counts.values())
    k = len(counts)
    return {d: total / (k * n) for d, n in counts.items()}


def default_domain_index(episodes: Sequence[Episode]) -> dict:
    return {d: i for i, d in enumerate(sorted(ep.domain for ep in episodes))}


def _arrays(samples, domain_index, dtype) -> Arrays:
    return stack(samples, domain_index, dtype)


def evaluate_tables(model, episodes: Sequence[Episode], domain_index: dict, split: str = "test"):
    """Accuracy tables (exact fractions) over each episode's ``split`` samples."""
    preds, truth, doms = [], [], []
    for ep in episodes:
        samples = ep.test if split == "test" else ep.train
        if not samples:
            continue
        data = _arrays(samples, domain_index, model.dtype)
        preds.append(model.predict(data.x, data.d))
        truth.append(data.y)
        doms += [ep.domain] * len(data)
    if not preds:
        raise ValueError(f"no {split} samples to evaluate")
    return per_domain_accuracy(records_from_arrays(np.concatenate(preds), np.concatenate(truth), doms))


def table_means(tables) -> dict:
    """Domain -> accuracy; for AU, the mean over per-unit accuracies."""
    if isinstance(tables, AccuracyTable):
        return tables.as_floats()
    doms = tables[0].entries
    return {d: float(sum(t.entries[d] for t in tables) / len(tables)) for d in sorted(doms)}


def evaluate(model, episodes, domain_index, split: str = "test") -> dict:
    return table_means(evaluate_tables(model, episodes, domain_index, split))


class _Run:
    """Mutable training context shared by the incremental and offline loops."""

    def __init__(self, model, config: TrainConfig, seed: int):
        self.model = model
        self.config = config
        ss = np.random.SeedSequence(seed)
        train_ss, aug_ss, buf_ss = ss.spawn(3)
        self.rng = np.random.default_rng(train_ss)
        self.aug_rng = np.random.default_rng(aug_ss)
        self.buffer_seed = int(buf_ss.generate_state(1)[0])
        self.params = model.params if config.trainable is None else model.params.subset(config.trainable)
        self.opt = self._new_optimizer()
        self.step = 0
        self._log = open(config.checksum_log, "a", encoding="utf-8") if config.checksum_log else None

    def _new_optimizer(self):
        return OptimizerState(kind=self.config.optimizer, learning_rate=self.config.learning_rate)

    def close(self):
        if self._log is not None:
            self._log.close()

    def fit(self, data: Arrays, state: Optional[RegularizerState] = None, weights: Optional[dict] = None):
        """Run ``config.epochs`` epochs over ``data``; returns (last-epoch mean task loss, last penalty)."""
        cfg, model = self.config, self.model
        all_params = model.params
        if cfg.reset_optimizer:
            self.opt = self._new_optimizer()
        buffer = state.buffer if state is not None else None
        si = state is not None and state.method == "si"
        n = len(data)
        loss_sum, loss_n, pen_val = 0.0, 0, 0.0
        for _ in range(cfg.epochs):
            loss_sum, loss_n = 0.0, 0
            perm = self.rng.permutation(n)
            replay = buffer is not None and len(buffer) > 0
            chunk = cfg.batch_size // 2 if replay and cfg.batch_size > 1 else cfg.batch_size
            for start in range(0, n, chunk):
                batch = data.take(perm[start:start + chunk])
                if replay:
                    batch, _ = buffer_minibatch(buffer, batch, cfg.batch_size)
                xb = augment_batch(batch.x.astype(model.dtype, copy=False), cfg.augment, self.aug_rng)
                w = None if weights is None else np.array([weights[int(d)] for d in batch.d])
                all_params.zero_grad()
                loss = model.loss(xb, batch.y, batch.d, w, training=True, rng=self.rng)
                backward(loss, all_params)
                loss_sum += float(loss.data) * len(batch)
                loss_n += len(batch)
                task_grad = self.params.grads() if si else None
                if state is not None and state.active():
                    pen = penalty_quadratic(state, all_params)
                    pen_val = float(pen.data)
                    backward(pen, all_params)
                before = self.params.snapshot() if si else None
                optimizer_step(self.params, self.opt)
                if si:
                    delta = {k: t.data - before[k] for k, t in self.params.items()}
                    si_accumulate_step(state, task_grad, delta)
                self.step += 1
                if self._log is not None:
                    self._log.write("\n".join(all_params.checksum_lines(self.step)) + "\n")
        return (loss_sum / loss_n if loss_n else float("nan")), pen_val


def _consolidate(state: RegularizerState, model, data: Arrays, episode: int):
    hyper = state.hyper
    if state.method == "ewc":
        anchor, fisher = consolidate_ewc(model, data.x, data.y, data.d, hyper.fisher_sample_cap)
        add_ewc_anchor(state, episode, anchor, fisher)
    elif state.method == "ewc_online":
        anchor, fisher = consolidate_ewc(model, data.x, data.y, data.d, hyper.fisher_sample_cap)
        update_ewc_online(state, fisher, anchor, hyper.gamma, episode)
    elif state.method == "si":
        si_consolidate(state, model.params, episode)
    elif state.method == "mas":
        anchor, omega = consolidate_mas(model, data.x, hyper.fisher_sample_cap)
        accumulate_importance(state, omega, anchor, episode)
    elif state.method == "naive_rehearsal":
        buffer_insert_arrays(state.buffer, data)


def train_domain_incremental(model, episodes: Sequence[Episode], method: str = "none",
                             method_config: Optional[MethodConfig] = None, config: Optional[TrainConfig] = None,
                             seed: int = 0, domain_index: Optional[dict] = None,
                             eval_episodes: Optional[Sequence[Episode]] = None):
    """Train on one episode at a time, in the given order, with a single shared head.

    After every episode the method consolidates (Fisher / path integral /
    output sensitivity / buffer insertion) and the model is scored on the test
    split of every domain in ``eval_episodes`` (default: ``episodes``).
    Returns ``(model, RegularizerState, TrainingHistory)``.
    """
    if not episodes:
        raise ValueError("need at least one episode")
    config = config or TrainConfig()
    method_config = method_config or MethodConfig.for_method(method)
    domain_index = domain_index or default_domain_index(episodes)
    eval_episodes = episodes if eval_episodes is None else eval_episodes
    state = RegularizerState(method, method_config)
    run = _Run(model, config, seed)
    if method == "naive_rehearsal":
        state.buffer = ReplayBuffer(method_config.buffer_capacity, run.buffer_seed)
    if method == "si":
        si_begin_episode(state, model.params)
    history = TrainingHistory(seed, method)
    try:
        for pos, ep in enumerate(episodes):
            if not ep.train:
                msg = f"episode {pos} ({ep.domain}) has no training samples; skipped"
                warnings.warn(msg, stacklevel=2)
                history.episodes.append(EpisodeLog(pos, ep.domain, 0, float("nan"), 0.0,
                                                   evaluate(model, eval_episodes, domain_index), msg))
                continue
            data = _arrays(ep.train, domain_index, model.dtype)
            task_loss, pen = run.fit(data, state)
            _consolidate(state, model, data, pos)
            history.episodes.append(EpisodeLog(pos, ep.domain, config.epochs, task_loss, pen,
                                               evaluate(model, eval_episodes, domain_index)))
    finally:
        run.close()
    return model, state, history


def pool(episodes: Sequence[Episode], domain_index: dict, dtype) -> Arrays:
    """Training samples of all episodes in a canonical (domain-name) order."""
    ordered = sorted(episodes, key=lambda ep: ep.domain)
    return concat([_arrays(ep.train, domain_index, dtype) for ep in ordered if ep.train])


def train_offline(model, episodes: Sequence[Episode], config: Optional[TrainConfig] = None, seed: int = 0,
                  domain_index: Optional[dict] = None, domain_weights: Optional[dict] = None):
    """Joint training on the pooled data of all episodes; scored per domain.

    ``domain_weights`` (domain name -> loss weight) turns this into
    strategic sampling. Returns ``(model, TrainingHistory)``.
    """
    config = config or TrainConfig()
    domain_index = domain_index or default_domain_index(episodes)
    data = pool(episodes, domain_index, model.dtype)
    weights = None
    if domain_weights is not None:
        weights = {domain_index[d]: w for d, w in domain_weights.items()}
    run = _Run(model, config, seed)
    try:
        task_loss, _ = run.fit(data, None, weights)
    finally:
        run.close()
    history = TrainingHistory(seed, "offline")
    history.episodes.append(EpisodeLog(0, "pooled", config.epochs, task_loss, 0.0,
                                       evaluate(model, episodes, domain_index)))
    return model, history

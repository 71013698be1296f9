"""Grid execution: methods x augmentation x seeds, with cached per-cell records.

Layout of the output directory::

    out/
      runs/<hash>/record.json   one per (method, augmentation, seed) cell
      sweeps/<hash>.json        validation scores of a hyperparameter sweep
      manifest.json             every cell of the last run and its status
      fairness.csv
      accuracy.csv

Record schema (``schema_version`` 1): ``config_hash``, ``status`` ("ok" or
"failed"), ``error``, ``method``, ``attribute``, ``augmentation`` (bool),
``seed``, ``task``, ``hyper`` (MethodConfig fields or null), ``tables`` (list of
``{"task", "entries": {domain: "num/den"}}``), ``fairness`` (float),
``history`` (per-episode accuracies) and ``duration_s``.
"""

from __future__ import annotations

import hashlib
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from ..continual import (
    TrainConfig,
    default_domain_index,
    evaluate,
    evaluate_tables,
    strategic_weights,
    train_domain_incremental,
    train_offline,
)
from ..data import AugmentConfig, Episode, load_manifest, split_episodes, stratified_split, synth_generate
from ..fairness import (
    ACCURACY_HEADER,
    FAIRNESS_HEADER,
    AccuracyTable,
    FairnessReport,
    accuracy_rows,
    aggregate_seeds,
    fairness_rows,
    fairness_score,
    au_fairness_mean,
    write_csv,
)
from ..models import HeadSpec, ModelSpec, build_baseline_cnn, build_mlp
from .config import ALL_METHODS, SWEEP_FIELD, VALIDATION_FRACTION, ExperimentConfig, make_synth_config

SCHEMA_VERSION = 1
INCREMENTAL = {"finetune": "none", "ewc": "ewc", "ewc_online": "ewc_online", "si": "si", "mas": "mas",
               "naive_rehearsal": "naive_rehearsal"}


# data and models ----------------------------------------------------------

@lru_cache(maxsize=4)
def _load(dataset_json: str, task: str, base_dir: str):
    d = json.loads(dataset_json)
    if "synth" in d:
        scfg = make_synth_config(d["synth"])
        return tuple(synth_generate(scfg)), scfg.num_classes
    size = d.get("image_size")
    samples = load_manifest(Path(base_dir, d["manifest"]), task, num_classes=d.get("num_classes", 7),
                            num_units=d.get("num_units"), channels=d.get("channels", 1),
                            image_size=tuple(size) if size else None,
                            test_fraction=d.get("test_fraction", 0.2), seed=d.get("split_seed", 0))
    if task == "expression":
        outputs = d.get("num_classes", 7)
    else:
        outputs = d.get("num_units") or len(np.atleast_1d(samples[0].label))
    return tuple(samples), outputs


def load_episodes(cfg: ExperimentConfig):
    samples, outputs = _load(json.dumps(cfg.dataset, sort_keys=True), cfg.task, cfg.base_dir)
    return split_episodes(list(samples), cfg.order), outputs


def _model(cfg: ExperimentConfig, episodes, outputs: int, method: str, seed: int):
    shape = tuple(np.shape(episodes[0].train[0].features if episodes[0].train else episodes[0].test[0].features))
    head = HeadSpec()
    if method in ("ddc", "dic"):
        head = HeadSpec(method, len(episodes), cfg.model.ddc_rule)
    backbone = cfg.model.backbone or ("baseline_cnn" if len(shape) == 3 else "mlp")
    spec = ModelSpec(shape, outputs, cfg.task, backbone, head, hidden=cfg.model.hidden)
    if backbone == "baseline_cnn":
        return build_baseline_cnn(spec, seed)
    return build_mlp(spec, seed, dropout_rate=cfg.model.dropout)


def _train_config(cfg: ExperimentConfig, aug: bool) -> TrainConfig:
    t = cfg.train
    return TrainConfig(epochs=t.epochs, batch_size=t.batch_size, optimizer=t.optimizer,
                       learning_rate=t.learning_rate, augment=AugmentConfig(enabled=aug))


def validation_episodes(episodes, seed: int):
    """Hold out a stratified fraction of every episode's train split as its test split."""
    out = []
    for ep in episodes:
        tr, val = stratified_split(ep.train, VALIDATION_FRACTION, seed)
        out.append(Episode(ep.domain, tr, val, ep.position))
    return out


def train_method(cfg: ExperimentConfig, episodes, outputs: int, method: str, aug: bool, seed: int,
                 hyper: Optional[dict] = None):
    """Train one method; returns (model, history, domain_index)."""
    model = _model(cfg, episodes, outputs, method, seed)
    tc = _train_config(cfg, aug)
    index = default_domain_index(episodes)
    if method in INCREMENTAL:
        mc = cfg.method_config(INCREMENTAL[method], **(hyper or {}))
        model, _, history = train_domain_incremental(model, episodes, INCREMENTAL[method], mc, tc, seed, index)
        return model, history, index
    weights = None
    if method == "strategic_sampling":
        weights = strategic_weights({ep.domain: len(ep.train) for ep in episodes})
    model, history = train_offline(model, episodes, tc, seed, index, weights)
    return model, history, index


# hashing ------------------------------------------------------------------

def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _base_payload(cfg: ExperimentConfig) -> dict:
    return {"schema": SCHEMA_VERSION, "dataset": cfg.dataset_identity(), "task": cfg.task,
            "order": cfg.order, "model": asdict(cfg.model), "train": asdict(cfg.train)}


def hyper_for(cfg: ExperimentConfig, method: str, override: Optional[dict] = None) -> Optional[dict]:
    if method not in INCREMENTAL or method == "finetune":
        return None
    return asdict(cfg.method_config(INCREMENTAL[method], **(override or {})))


def cell_hash(cfg: ExperimentConfig, method: str, aug: bool, seed: int, hyper: Optional[dict]) -> str:
    return _digest({**_base_payload(cfg), "attribute": cfg.attribute, "method": method,
                    "augmentation": aug, "seed": seed, "hyper": hyper})


def sweep_hash(cfg: ExperimentConfig, method: str, aug: bool) -> str:
    return _digest({**_base_payload(cfg), "sweep": method, "augmentation": aug, "seeds": list(cfg.seeds),
                    "grid": cfg.sweeps[method], "hyper": hyper_for(cfg, method),
                    "validation_fraction": VALIDATION_FRACTION})


# tables <-> json ----------------------------------------------------------

def tables_to_json(tables) -> list:
    tables = [tables] if isinstance(tables, AccuracyTable) else list(tables)
    return [{"task": t.task, "entries": {d: str(Fraction(v)) for d, v in sorted(t.entries.items())}}
            for t in tables]


def tables_from_json(data: list):
    tables = [AccuracyTable({d: Fraction(v) for d, v in t["entries"].items()}, t["task"]) for t in data]
    if len(tables) == 1 and tables[0].task == "expression":
        return tables[0]
    return tables


def record_fairness(tables) -> float:
    if isinstance(tables, AccuracyTable):
        return float(fairness_score(tables))
    return float(au_fairness_mean(tables)[1])


# workers ------------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    kind: str  # "cell" or "sweep"
    method: str
    aug: bool
    seed: int
    hyper: Optional[dict]
    value: Optional[float] = None


def _run_cell(cfg: ExperimentConfig, job: Job) -> dict:
    t0 = time.perf_counter()
    rec = {"schema_version": SCHEMA_VERSION, "config_hash": cell_hash(cfg, job.method, job.aug, job.seed, job.hyper),
           "method": job.method, "attribute": cfg.attribute, "augmentation": job.aug, "seed": job.seed,
           "task": cfg.task, "hyper": job.hyper}
    try:
        episodes, outputs = load_episodes(cfg)
        model, history, index = train_method(cfg, episodes, outputs, job.method, job.aug, job.seed, job.hyper)
        tables = evaluate_tables(model, episodes, index)
        rec.update(status="ok", error=None, tables=tables_to_json(tables), fairness=record_fairness(tables),
                   history=history.to_dict())
    except Exception as exc:  # failed cells are reported, the grid continues
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}", traceback=traceback.format_exc(),
                   tables=None, fairness=None, history=None)
    rec["duration_s"] = round(time.perf_counter() - t0, 3)
    return rec


def _run_sweep_point(cfg: ExperimentConfig, job: Job) -> float:
    episodes, outputs = load_episodes(cfg)
    val = validation_episodes(episodes, job.seed)
    model, _, index = train_method(cfg, val, outputs, job.method, job.aug, job.seed,
                                   {SWEEP_FIELD[job.method]: job.value})
    acc = evaluate(model, val, index)
    return float(np.mean([acc[d] for d in sorted(acc)]))


def _execute(args):
    cfg, job = args
    if job.kind == "sweep":
        return _run_sweep_point(cfg, job)
    return _run_cell(cfg, job)


def _map(cfg, jobs: list, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield job, _execute((cfg, job))
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # results come back in submission order; the caller is the single writer
        yield from zip(jobs, pool.map(_execute, [(cfg, j) for j in jobs]))


# grid ---------------------------------------------------------------------

def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def run_sweeps(cfg: ExperimentConfig, out: Path, workers: int = 1, force: bool = False, log=print) -> dict:
    """Choose each swept method's value by mean validation accuracy; returns {(method, aug): sweep dict}."""
    chosen, pending = {}, []
    for method in cfg.methods:
        if method not in cfg.sweeps:
            continue
        for aug in cfg.aug_settings:
            path = out / "sweeps" / f"{sweep_hash(cfg, method, aug)}.json"
            if path.exists() and not force:
                chosen[(method, aug)] = json.loads(path.read_text(encoding="utf-8"))
                continue
            pending += [Job("sweep", method, aug, s, None, v) for v in cfg.sweeps[method] for s in cfg.seeds]
    scores: dict = {}
    for job, score in _map(cfg, pending, workers):
        scores.setdefault((job.method, job.aug), {}).setdefault(job.value, []).append(score)
    for (method, aug), by_value in scores.items():
        grid = cfg.sweeps[method]
        means = [float(np.mean(by_value[v])) for v in grid]
        best = grid[int(np.argmax(means))]  # first maximum: smallest value on ties
        data = {"method": method, "augmentation": aug, "field": SWEEP_FIELD[method], "grid": grid,
                "validation_accuracy": means, "chosen": best}
        _write_json(out / "sweeps" / f"{sweep_hash(cfg, method, aug)}.json", data)
        log(f"sweep {method}{' +aug' if aug else ''}: {SWEEP_FIELD[method]}={best:g}")
        chosen[(method, aug)] = data
    return chosen


@dataclass
class GridResult:
    records: list
    new_runs: int
    failed: int
    manifest: dict


def run_grid(cfg: ExperimentConfig, workers: int = 1, force: bool = False, log=print) -> GridResult:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    sweeps = run_sweeps(cfg, out, workers, force, log)
    cells, todo, records = [], [], {}
    for method in sorted(cfg.methods, key=ALL_METHODS.index):
        for aug in cfg.aug_settings:
            override = None
            if (method, aug) in sweeps:
                override = {SWEEP_FIELD[method]: sweeps[(method, aug)]["chosen"]}
            hyper = hyper_for(cfg, method, override)
            for seed in cfg.seeds:
                job = Job("cell", method, aug, seed, hyper)
                h = cell_hash(cfg, method, aug, seed, hyper)
                cells.append((job, h))
                path = out / "runs" / h / "record.json"
                if path.exists() and not force:
                    rec = json.loads(path.read_text(encoding="utf-8"))
                    if rec.get("status") == "ok":
                        records[h] = rec
                        continue
                todo.append(job)
    new = 0
    for job, rec in _map(cfg, todo, workers):
        new += 1
        records[rec["config_hash"]] = rec
        _write_json(out / "runs" / rec["config_hash"] / "record.json", rec)
        tag = "FAILED " + rec["error"] if rec["status"] != "ok" else f"F={rec['fairness']:.4f}"
        log(f"run {job.method}{' +aug' if job.aug else ''} seed={job.seed}: {tag} ({rec['duration_s']:.1f}s)")
    ordered = [records[h] for _, h in cells]
    failed = sum(r["status"] != "ok" for r in ordered)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "cells": [{"method": j.method, "augmentation": j.aug, "seed": j.seed, "hash": h,
                   "status": records[h]["status"], "hyper": j.hyper} for j, h in cells],
        "sweeps": [{"method": m, "augmentation": a, "field": d["field"], "chosen": d["chosen"],
                    "grid": d["grid"], "validation_accuracy": d["validation_accuracy"]}
                   for (m, a), d in sorted(sweeps.items())],
    }
    _write_json(out / "manifest.json", manifest)
    write_result_csvs(ordered, out)
    return GridResult(ordered, new, failed, manifest)


# CSV emission -------------------------------------------------------------

def attribute_label(attribute: str, aug: bool) -> str:
    return f"{attribute}+aug" if aug else attribute


def group_reports(records) -> dict:
    """{(method, attribute label): FairnessReport aggregated over seeds}, ok records only."""
    groups: dict = {}
    for rec in records:
        if rec.get("status") != "ok":
            continue
        key = (rec["method"], attribute_label(rec["attribute"], rec["augmentation"]))
        groups.setdefault(key, []).append(rec)
    out = {}
    for key, recs in groups.items():
        recs = sorted(recs, key=lambda r: r["seed"])
        out[key] = aggregate_seeds([FairnessReport.from_tables(tables_from_json(r["tables"]), r["seed"])
                                    for r in recs])
    return out


def _method_order(key):
    method, attr = key
    rank = ALL_METHODS.index(method) if method in ALL_METHODS else len(ALL_METHODS)
    return (rank, method, attr)


def write_result_csvs(records, out: Path) -> dict:
    reports = group_reports(records)
    f_rows, a_rows = [], []
    for key in sorted(reports, key=_method_order):
        f_rows += fairness_rows(key[0], key[1], reports[key])
        a_rows += accuracy_rows(key[0], key[1], reports[key])
    write_csv(out / "fairness.csv", FAIRNESS_HEADER, f_rows)
    write_csv(out / "accuracy.csv", ACCURACY_HEADER, a_rows)
    return reports

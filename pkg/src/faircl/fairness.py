"""Per-domain accuracy tables and the min-ratio (equal opportunity) fairness score.

Accuracies are kept as exact :class:`fractions.Fraction` counts until they are
reported, so ``F = 1`` really means the domain accuracies are equal.
"""

from __future__ import annotations

import csv
import io
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Optional, Sequence

import numpy as np


class FairnessError(ValueError):
    pass


class UndefinedFairnessError(FairnessError):
    """Every domain scored zero, so no ratio is defined."""


@dataclass(frozen=True)
class EvaluationRecord:
    prediction: object
    ground_truth: object
    sensitive_attribute: str
    attribute_kind: str = "custom"

    def __post_init__(self):
        if not self.sensitive_attribute:
            raise FairnessError("sensitive attribute must be non-empty")
        if np.ndim(self.prediction) != np.ndim(self.ground_truth):
            raise FairnessError("prediction and ground truth kinds differ")


@dataclass
class AccuracyTable:
    entries: dict
    task: str = "expression"

    def __post_init__(self):
        if not self.entries:
            raise FairnessError("accuracy table needs at least one domain")

    @property
    def dominant(self) -> str:
        best = max(self.entries.values())
        return min(d for d, v in self.entries.items() if v == best)

    def as_floats(self) -> dict[str, float]:
        return {d: float(v) for d, v in sorted(self.entries.items())}


def per_domain_accuracy(records: Sequence[EvaluationRecord], domains: Optional[Iterable[str]] = None):
    """Accuracy per domain.

    Single-label records give one :class:`AccuracyTable`; multi-label (AU)
    records give a list with one table per unit (task ``au_1`` ... ``au_A``).
    ``domains`` lists domains that must be present even if they have no records.
    """
    if not records:
        raise FairnessError("no evaluation records")
    multilabel = np.ndim(records[0].ground_truth) > 0
    expected = set(domains or ())
    seen = {r.sensitive_attribute for r in records}
    missing = sorted(expected - seen)
    if missing:
        raise FairnessError(f"domain {missing[0]!r} has no evaluation records")
    if not multilabel:
        correct: dict[str, int] = defaultdict(int)
        count: dict[str, int] = defaultdict(int)
        for r in records:
            count[r.sensitive_attribute] += 1
            correct[r.sensitive_attribute] += int(r.prediction == r.ground_truth)
        return AccuracyTable({d: Fraction(correct[d], count[d]) for d in sorted(count)}, "expression")
    units = len(records[0].ground_truth)
    hits: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(units, dtype=np.int64))
    count = defaultdict(int)
    for r in records:
        count[r.sensitive_attribute] += 1
        hits[r.sensitive_attribute] += np.asarray(r.prediction) == np.asarray(r.ground_truth)
    return [AccuracyTable({d: Fraction(int(hits[d][a]), count[d]) for d in sorted(count)}, f"au_{a + 1}")
            for a in range(units)]


def records_from_arrays(pred, truth, domains: Sequence[str], kind: str = "custom") -> list[EvaluationRecord]:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.ndim == 1:
        return [EvaluationRecord(int(p), int(t), d, kind) for p, t, d in zip(pred, truth, domains)]
    return [EvaluationRecord(tuple(int(v) for v in p), tuple(int(v) for v in t), d, kind)
            for p, t, d in zip(pred, truth, domains)]


def fairness_score(table) -> Real:
    """min over domains of acc(domain) / acc(dominant), i.e. min / max.

    Accepts an :class:`AccuracyTable` or a plain domain -> accuracy mapping.
    """
    entries = table.entries if isinstance(table, AccuracyTable) else table
    if not entries:
        raise FairnessError("empty accuracy table")
    values = list(entries.values())
    if any(v < 0 or v > 1 for v in values):
        raise FairnessError("accuracies must lie in [0, 1]")
    top = max(values)
    if top == 0:
        raise UndefinedFairnessError("all domain accuracies are zero")
    return min(values) / top


def au_fairness_mean(tables: Sequence[AccuracyTable]):
    """Fairness per action unit and their arithmetic mean."""
    if not tables:
        raise FairnessError("no AU tables")
    keys = set(tables[0].entries)
    for t in tables[1:]:
        if set(t.entries) != keys:
            raise FairnessError("AU tables cover different domain sets")
    per = [fairness_score(t) for t in tables]
    return per, sum(per) / len(per)


def _sd(values: Sequence[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


@dataclass
class FairnessReport:
    """Fairness and accuracy of one (method, attribute, task) cell across seeds.

    Every value list is indexed like ``seeds``. ``fairness`` holds the score
    per seed (for AU tasks, the mean over units); ``per_au`` the per-unit
    scores; ``accuracy`` maps table task -> domain -> per-seed accuracy.
    """

    task: str
    seeds: list = field(default_factory=list)
    fairness: list = field(default_factory=list)
    accuracy: dict = field(default_factory=dict)
    per_au: Optional[list] = None

    @classmethod
    def from_tables(cls, tables, seed: int) -> "FairnessReport":
        if isinstance(tables, AccuracyTable):
            return cls("expression", [seed], [float(fairness_score(tables))],
                       {tables.task: {d: [v] for d, v in tables.as_floats().items()}})
        per, mean = au_fairness_mean(tables)
        acc = {t.task: {d: [v] for d, v in t.as_floats().items()} for t in tables}
        return cls("au", [seed], [float(mean)], acc, [[float(f) for f in per]])

    def _structure(self):
        return (self.task, tuple((k, tuple(sorted(v))) for k, v in sorted(self.accuracy.items())),
                None if self.per_au is None else len(self.per_au[0]))

    @property
    def fairness_mean(self) -> float:
        return statistics.fmean(self.fairness)

    @property
    def fairness_sd(self) -> float:
        return _sd(self.fairness)

    def per_au_mean(self) -> Optional[list]:
        if self.per_au is None:
            return None
        return [statistics.fmean(col) for col in zip(*self.per_au)]

    def per_au_sd(self) -> Optional[list]:
        if self.per_au is None:
            return None
        return [_sd(col) for col in zip(*self.per_au)]

    def accuracy_mean(self, task: str, domain: str) -> float:
        return statistics.fmean(self.accuracy[task][domain])

    def accuracy_sd(self, task: str, domain: str) -> float:
        return _sd(self.accuracy[task][domain])


def aggregate_seeds(reports: Sequence[FairnessReport]) -> FairnessReport:
    """Concatenate per-seed reports of identical structure into one."""
    if not reports:
        raise FairnessError("no reports to aggregate")
    ref = reports[0]._structure()
    for r in reports[1:]:
        if r._structure() != ref:
            raise FairnessError("reports have mismatched structure")
    seeds = [s for r in reports for s in r.seeds]
    if len(set(seeds)) != len(seeds):
        raise FairnessError("duplicate seeds across reports")
    acc = {k: {d: [v for r in reports for v in r.accuracy[k][d]] for d in doms}
           for k, doms in reports[0].accuracy.items()}
    per_au = None if ref[2] is None else [row for r in reports for row in r.per_au]
    return FairnessReport(ref[0], seeds, [f for r in reports for f in r.fairness], acc, per_au)


# CSV export ----------------------------------------------------------------

FAIRNESS_HEADER = ["method", "attribute", "task", "fairness_mean", "fairness_sd", "seeds"]
ACCURACY_HEADER = ["method", "attribute", "domain", "task", "accuracy_mean", "accuracy_sd"]


def fmt(x: float) -> str:
    return f"{x:.4f}"


def fairness_rows(method: str, attribute: str, report: FairnessReport) -> list[list[str]]:
    seeds = ";".join(str(s) for s in report.seeds)
    rows = [[method, attribute, report.task, fmt(report.fairness_mean), fmt(report.fairness_sd), seeds]]
    if report.per_au is not None:
        for a, (m, s) in enumerate(zip(report.per_au_mean(), report.per_au_sd()), start=1):
            rows.append([method, attribute, f"au_{a}", fmt(m), fmt(s), seeds])
    return rows


def accuracy_rows(method: str, attribute: str, report: FairnessReport) -> list[list[str]]:
    rows = []
    for task in sorted(report.accuracy, key=_task_order):
        for dom in sorted(report.accuracy[task]):
            rows.append([method, attribute, dom, task,
                         fmt(report.accuracy_mean(task, dom)), fmt(report.accuracy_sd(task, dom))])
    return rows


def _task_order(task: str):
    if task.startswith("au_"):
        return (1, int(task[3:]))
    return (0, 0)


def write_csv(path, header: list[str], rows: Iterable[list[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


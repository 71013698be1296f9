"""Comparison tables built from stored run records.

Rows are methods grouped as baselines, non-CL mitigation and CL methods;
columns are attribute labels (``attr`` or ``attr+aug``). In every column the
best value is marked ``*`` and the second best is wrapped in ``[ ]``. Values
are compared at the 4-decimal precision they are printed with, so ties share a
mark.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .runner import group_reports

GROUPS = (
    ("baselines", ("finetune", "offline")),
    ("non-CL", ("ddc", "dic", "strategic_sampling")),
    ("CL", ("ewc", "ewc_online", "si", "mas", "naive_rehearsal")),
)


class ReportError(RuntimeError):
    pass


def load_records(runs_dir) -> list[dict]:
    """Every ``record.json`` below ``runs_dir`` (the output dir or its runs/ folder)."""
    root = Path(runs_dir)
    if not root.is_dir():
        raise ReportError(f"{root} is not a directory")
    recs = []
    for path in sorted(root.rglob("record.json")):
        rec = json.loads(path.read_text(encoding="utf-8"))
        if rec.get("status") == "ok":
            recs.append(rec)
    if not recs:
        raise ReportError(f"no completed run records under {root}")
    return recs


def group_of(method: str) -> str:
    for name, members in GROUPS:
        if method in members:
            return name
    return "other"


def _row_order(method: str):
    for g, (_, members) in enumerate(GROUPS):
        if method in members:
            return (g, members.index(method), method)
    return (len(GROUPS), 0, method)


def mark_column(values: dict) -> dict:
    """method -> "best" | "second" | "" from the rounded values of one column."""
    rounded = {m: round(v, 4) for m, v in values.items()}
    distinct = sorted(set(rounded.values()), reverse=True)
    marks = {}
    for m, v in rounded.items():
        if v == distinct[0]:
            marks[m] = "best"
        elif len(distinct) > 1 and v == distinct[1]:
            marks[m] = "second"
        else:
            marks[m] = ""
    return marks


def build_matrices(records) -> dict:
    """{"fairness": (rows, cols, cells), "accuracy": (rows, cols, cells)}; cells[(method, col)] = value."""
    reports = group_reports(records)
    methods = sorted({m for m, _ in reports}, key=_row_order)
    f_cols = sorted({a for _, a in reports})
    f_cells = {(m, a): r.fairness_mean for (m, a), r in reports.items()}
    a_cells = {}
    for (m, a), r in reports.items():
        for task, doms in r.accuracy.items():
            for d in doms:
                col = f"{a}:{d}" if task == "expression" else f"{a}:{d}:{task}"
                a_cells[(m, col)] = r.accuracy_mean(task, d)
    a_cols = sorted({c for _, c in a_cells})
    return {"fairness": (methods, f_cols, f_cells), "accuracy": (methods, a_cols, a_cells)}


def _marks(rows, cols, cells) -> dict:
    out = {}
    for c in cols:
        col = {m: cells[(m, c)] for m in rows if (m, c) in cells}
        for m, mark in mark_column(col).items():
            out[(m, c)] = mark
    return out


def _cell_text(v, mark) -> str:
    if v is None:
        return "-"
    s = f"{v:.4f}"
    return {"best": f"{s}*", "second": f"[{s}]"}.get(mark, s)


def format_text(records) -> str:
    parts = []
    titles = {"fairness": "Fairness score (mean over seeds)", "accuracy": "Test accuracy (mean over seeds)"}
    for name, (rows, cols, cells) in build_matrices(records).items():
        marks = _marks(rows, cols, cells)
        width = max(12, *(len(c) + 2 for c in cols))
        lines = [titles[name], f"{'group':<11}{'method':<20}" + "".join(f"{c:>{width}}" for c in cols)]
        prev = None
        for m in rows:
            g = group_of(m)
            label = g if g != prev else ""
            prev = g
            vals = "".join(f"{_cell_text(cells.get((m, c)), marks.get((m, c), '')):>{width}}" for c in cols)
            lines.append(f"{label:<11}{m:<20}{vals}")
        parts.append("\n".join(lines))
    parts.append("* best per column, [ ] second best")
    return "\n\n".join(parts) + "\n"


def format_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "group", "method", "column", "value", "mark"])
    for name, (rows, cols, cells) in build_matrices(records).items():
        marks = _marks(rows, cols, cells)
        for m in rows:
            for c in cols:
                if (m, c) in cells:
                    w.writerow([name, group_of(m), m, c, f"{cells[(m, c)]:.4f}", marks[(m, c)]])
    return buf.getvalue()

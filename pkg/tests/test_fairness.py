import csv
import statistics
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faircl.fairness import (
    FAIRNESS_HEADER,
    AccuracyTable,
    EvaluationRecord,
    FairnessError,
    FairnessReport,
    UndefinedFairnessError,
    accuracy_rows,
    aggregate_seeds,
    au_fairness_mean,
    fairness_rows,
    fairness_score,
    per_domain_accuracy,
    records_from_arrays,
    write_csv,
)

fractions = st.fractions(min_value=0, max_value=1, max_denominator=1000)
tables = st.dictionaries(st.text("abcdefgh", min_size=1, max_size=4), fractions, min_size=1, max_size=6)


def records(correct: dict, total: dict):
    out = []
    for d in total:
        out += [EvaluationRecord(1, 1, d)] * correct[d] + [EvaluationRecord(0, 1, d)] * (total[d] - correct[d])
    return out


class TestFairnessScore:
    def test_worked_example_is_exact(self):
        assert fairness_score({"Male": Fraction("0.9"), "Female": Fraction("0.72")}) == Fraction(4, 5)

    def test_from_counts(self):
        table = per_domain_accuracy(records({"Male": 90, "Female": 72}, {"Male": 100, "Female": 100}))
        assert table.entries == {"Female": Fraction(18, 25), "Male": Fraction(9, 10)}
        assert fairness_score(table) == Fraction(4, 5)
        assert table.dominant == "Male"

    def test_three_domains(self):
        assert fairness_score({"a": Fraction(1, 2), "b": Fraction(3, 4), "c": Fraction(1, 4)}) == Fraction(1, 3)

    def test_single_domain(self):
        assert fairness_score({"a": Fraction(1, 3)}) == 1

    def test_all_zero_is_undefined(self):
        with pytest.raises(UndefinedFairnessError):
            fairness_score({"a": 0, "b": 0})

    def test_out_of_range(self):
        with pytest.raises(FairnessError):
            fairness_score({"a": Fraction(3, 2)})
        with pytest.raises(FairnessError):
            fairness_score({})

    @given(tables)
    def test_range(self, t):
        if max(t.values()) == 0:
            return
        assert 0 <= fairness_score(t) <= 1

    @given(tables, st.randoms())
    def test_permutation_and_renaming_invariant(self, t, rnd):
        if max(t.values()) == 0:
            return
        keys = list(t)
        vals = list(t.values())
        rnd.shuffle(vals)
        renamed = {f"x{i}": v for i, v in enumerate(vals)}
        assert fairness_score(renamed) == fairness_score(t)
        assert fairness_score(dict(zip(reversed(keys), reversed(list(t.values()))))) == fairness_score(t)

    @given(tables)
    def test_one_iff_equal(self, t):
        if max(t.values()) == 0:
            return
        assert (fairness_score(t) == 1) == (len(set(t.values())) == 1)

    @given(tables, st.fractions(min_value=Fraction(1, 100), max_value=1))
    def test_scale_invariant(self, t, k):
        if max(t.values()) == 0:
            return
        assert fairness_score({d: v * k for d, v in t.items()}) == fairness_score(t)

    def test_dominant_tie_break(self):
        assert AccuracyTable({"b": Fraction(1, 2), "a": Fraction(1, 2)}).dominant == "a"


class TestPerDomainAccuracy:
    def test_missing_domain(self):
        with pytest.raises(FairnessError):
            per_domain_accuracy(records({"a": 1}, {"a": 2}), domains=["a", "b"])

    def test_no_records(self):
        with pytest.raises(FairnessError):
            per_domain_accuracy([])

    def test_kind_mismatch(self):
        with pytest.raises(FairnessError):
            EvaluationRecord((1, 0), 1, "a")

    def test_au_tables(self):
        pred = np.array([[1, 0], [1, 1], [0, 0]])
        truth = np.array([[1, 1], [1, 1], [1, 0]])
        t = per_domain_accuracy(records_from_arrays(pred, truth, ["a", "a", "b"]))
        assert [x.task for x in t] == ["au_1", "au_2"]
        assert t[0].entries == {"a": 1, "b": 0}
        assert t[1].entries == {"a": Fraction(1, 2), "b": 1}

    def test_au_mean_of_twelve_matches_recomputation(self):
        rng = np.random.default_rng(0)
        n = 300
        truth = rng.integers(0, 2, (n, 12))
        pred = np.where(rng.random((n, 12)) < 0.8, truth, 1 - truth)
        doms = rng.choice(["f", "m"], n).tolist()
        per, mean = au_fairness_mean(per_domain_accuracy(records_from_arrays(pred, truth, doms)))
        # independent recomputation with plain numpy counts
        doms = np.array(doms)
        ref = []
        for a in range(12):
            acc = [Fraction(int((pred[doms == d, a] == truth[doms == d, a]).sum()), int((doms == d).sum()))
                   for d in ("f", "m")]
            ref.append(min(acc) / max(acc))
        assert per == ref
        assert mean == sum(ref) / 12

    def test_au_tables_must_match(self):
        with pytest.raises(FairnessError):
            au_fairness_mean([AccuracyTable({"a": 1}), AccuracyTable({"b": 1})])


class TestReports:
    def _report(self, seed, acc):
        return FairnessReport.from_tables(AccuracyTable(acc), seed)

    def test_aggregate_mean_and_sample_sd(self):
        reps = [self._report(s, {"a": Fraction(1), "b": Fraction(f)}) for s, f in
                [(1, Fraction(9, 10)), (2, Fraction(8, 10)), (3, Fraction(7, 10))]]
        agg = aggregate_seeds(reps)
        assert agg.seeds == [1, 2, 3]
        assert agg.fairness_mean == pytest.approx(0.8)
        assert agg.fairness_sd == pytest.approx(statistics.stdev([0.9, 0.8, 0.7]))
        assert agg.accuracy_mean("expression", "b") == pytest.approx(0.8)

    def test_single_seed_sd_is_zero(self):
        assert self._report(1, {"a": Fraction(1, 2)}).fairness_sd == 0.0

    def test_duplicate_seeds_rejected(self):
        r = self._report(1, {"a": Fraction(1, 2)})
        with pytest.raises(FairnessError):
            aggregate_seeds([r, r])

    def test_structure_mismatch(self):
        with pytest.raises(FairnessError):
            aggregate_seeds([self._report(1, {"a": Fraction(1)}), self._report(2, {"b": Fraction(1)})])

    def test_au_rows(self):
        t = [AccuracyTable({"a": Fraction(1), "b": Fraction(1, 2)}, "au_1"),
             AccuracyTable({"a": Fraction(1), "b": Fraction(1)}, "au_2")]
        rep = FairnessReport.from_tables(t, 1)
        rows = fairness_rows("si", "gender", rep)
        assert rows[0][:4] == ["si", "gender", "au", "0.7500"]
        assert [r[2] for r in rows[1:]] == ["au_1", "au_2"]
        assert [r[2] for r in accuracy_rows("si", "gender", rep)] == ["a", "b", "a", "b"]

    def test_csv_schema(self, tmp_path):
        rep = aggregate_seeds([self._report(s, {"a": Fraction(1), "b": Fraction(1, 2)}) for s in (1, 2)])
        path = tmp_path / "f.csv"
        write_csv(path, FAIRNESS_HEADER, fairness_rows("finetune", "race", rep))
        rows = list(csv.reader(open(path)))
        assert rows[0] == FAIRNESS_HEADER
        assert rows[1] == ["finetune", "race", "expression", "0.5000", "0.0000", "1;2"]
        assert open(path, "rb").read().count(b"\r") == 0

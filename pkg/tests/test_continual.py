import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faircl.autodiff import WIDE, OptimizerState, backward, optimizer_step
from faircl.continual import (
    MethodConfig,
    RegularizerState,
    ReplayBuffer,
    TrainConfig,
    buffer_insert,
    buffer_minibatch,
    consolidate_ewc,
    consolidate_mas,
    load_state,
    penalty_quadratic,
    save_state,
    si_accumulate_step,
    si_begin_episode,
    strategic_weights,
    train_domain_incremental,
    train_offline,
    update_ewc_online,
)
from faircl.data import SynthConfig, split_episodes, synth_generate
from faircl.data.samples import Arrays
from faircl.models import HeadSpec, ModelSpec, build_mlp

from helpers import fd_grad, rel_err


def small_episodes(seed=0, n=300):
    return split_episodes(synth_generate(SynthConfig(n_samples=n, seed=seed)))


def mlp(seed=0, hidden=(16,), head=HeadSpec(), dtype=WIDE):
    return build_mlp(ModelSpec((16,), 5, head=head, hidden=hidden), seed, dtype=dtype)


class TestFisher:
    @pytest.mark.criterion(2)
    def test_logistic_unit_is_quarter(self):
        model = build_mlp(ModelSpec((3,), 1, task="au", hidden=()), dtype=WIDE)
        for t in model.params.values():
            t.data[...] = 0.0
        x = np.random.default_rng(0).normal(size=(10, 3))
        y = np.array([[0], [1]] * 5)
        _, fisher = consolidate_ewc(model, x, y)
        bias = [n for n in fisher if fisher[n].ndim == 1]
        weight = [n for n in fisher if fisher[n].ndim == 2]
        # sigmoid(0) = 1/2 so each per-sample gradient of -log p is (1/2 - y) * input
        assert fisher[bias[0]].tolist() == [0.25]
        np.testing.assert_allclose(fisher[weight[0]][:, 0], 0.25 * np.mean(x ** 2, axis=0), rtol=1e-14)

    def test_cap_uses_first_samples(self):
        model = mlp()
        x = np.random.default_rng(1).normal(size=(20, 16))
        y = np.arange(20) % 5
        _, a = consolidate_ewc(model, x, y, cap=5)
        _, b = consolidate_ewc(model, x[:5], y[:5])
        for n in a:
            np.testing.assert_array_equal(a[n], b[n])

    def test_online_update(self):
        state = RegularizerState("ewc_online", MethodConfig(gamma=0.5))
        update_ewc_online(state, {"w": np.array([2.0])}, {"w": np.zeros(1)})
        update_ewc_online(state, {"w": np.array([1.0])}, {"w": np.ones(1)}, episode=1)
        assert state.running_fisher["w"].tolist() == [2.0]
        assert len(state.anchors) == 1 and state.anchors[0][0] == 1

    def test_online_running_sum(self):
        state = RegularizerState("ewc_online", MethodConfig(gamma=1.0))
        update_ewc_online(state, {"w": np.array([1.0])}, {"w": np.zeros(1)})
        update_ewc_online(state, {"w": np.array([2.0])}, {"w": np.zeros(1)}, episode=1)
        assert state.running_fisher["w"].tolist() == [3.0]

    def test_memory_footprint(self):
        samples = synth_generate(SynthConfig(num_domains=3, imbalance=(0.4, 0.3, 0.3), n_samples=150))
        eps = split_episodes(samples)
        cfg = TrainConfig(epochs=1)
        _, ewc, _ = train_domain_incremental(mlp(), eps, "ewc", None, cfg, 0)
        _, online, _ = train_domain_incremental(mlp(), eps, "ewc_online", None, cfg, 0)
        assert len(ewc.anchors) == len(ewc.importances) == 3
        assert len(online.anchors) == len(online.importances) == 1


class TestMAS:
    @pytest.mark.criterion(2)
    def test_matches_finite_difference(self):
        model = mlp(seed=3, hidden=(7,))
        x = np.random.default_rng(2).normal(size=(6, 16))
        _, omega = consolidate_mas(model, x)
        names = list(model.params.names())
        arrays = [model.params[n].data for n in names]
        per_sample = []
        for i in range(len(x)):
            def f(i=i):
                z = model.logits(x[i:i + 1], training=False).data
                return float(np.sum(z * z))
            per_sample.append(fd_grad(f, arrays, h=1e-5))
        for k, n in enumerate(names):
            ref = np.mean([np.abs(g[k]) for g in per_sample], axis=0)
            assert rel_err(omega[n], ref) < 1e-5, n

    def test_labels_not_used(self):
        model = mlp()
        x = np.random.default_rng(0).normal(size=(4, 16))
        _, a = consolidate_mas(model, x)
        _, b = consolidate_mas(model, x.copy())
        assert all(np.array_equal(a[n], b[n]) for n in a)


class TestSI:
    @pytest.mark.criterion(2)
    def test_per_step_omega_is_lr_g_squared(self):
        model = mlp(seed=1)
        params = model.params
        state = si_begin_episode(RegularizerState("si", MethodConfig(c=0.0)), params)
        x = np.random.default_rng(0).normal(size=(8, 16))
        y = np.arange(8) % 5
        lr = 0.05
        params.zero_grad()
        backward(model.loss(x, y), params)
        g = params.grads()
        before = params.snapshot()
        optimizer_step(params, OptimizerState("sgd", lr))
        delta = {n: t.data - before[n] for n, t in params.items()}
        si_accumulate_step(state, g, delta)
        eps = np.finfo(WIDE).eps
        for n in g:
            # delta is a difference of parameters, so its rounding error is an ulp of theta, not of lr * g
            bound = 2 * eps * np.abs(g[n]) * (np.abs(before[n]) + lr * np.abs(g[n]))
            assert np.all(np.abs(state.si_omega[n] - lr * g[n] ** 2) <= bound), n

    @pytest.mark.criterion(2)
    def test_training_loop_single_step(self):
        eps = small_episodes()
        lr, xi = 0.05, 0.1
        n0 = len(eps[0].train)
        cfg = TrainConfig(epochs=1, batch_size=n0, optimizer="sgd", learning_rate=lr)
        model = mlp(seed=2)
        ref = mlp(seed=2)
        from faircl.continual import default_domain_index
        index = default_domain_index(eps)
        _, state, _ = train_domain_incremental(model, eps[:1], "si", MethodConfig(c=0.0, xi=xi), cfg, 0, index)
        from faircl.data.samples import stack
        data = stack(eps[0].train, index, WIDE)
        ref.params.zero_grad()
        backward(ref.loss(data.x, data.y, data.d), ref.params)
        g = ref.params.grads()
        for n, big in state.importances[0].items():
            w = lr * g[n] ** 2
            np.testing.assert_allclose(big, w / ((lr * g[n]) ** 2 + xi), rtol=1e-9, atol=1e-15)


class TestPenalty:
    def test_value_and_strengths(self):
        model = mlp()
        anchor = {n: t.data + 1.0 for n, t in model.params.items()}
        imp = {n: np.full(t.shape, 2.0) for n, t in model.params.items()}
        state = RegularizerState("ewc", MethodConfig(lam=3.0), [(0, anchor)], [imp])
        total = model.params.total_count
        assert penalty_quadratic(state, model.params).item() == pytest.approx(1.5 * 2.0 * total)
        assert RegularizerState("si", MethodConfig(c=4.0)).strength == 4.0
        assert not RegularizerState("ewc", MethodConfig(lam=0.0), [(0, anchor)], [imp]).active()

    def test_save_load_round_trip(self, tmp_path):
        eps = small_episodes()
        for method in ("ewc", "si"):
            _, state, _ = train_domain_incremental(mlp(), eps, method, None, TrainConfig(epochs=1), 0)
            save_state(state, tmp_path / f"{method}.npz")
            back = load_state(tmp_path / f"{method}.npz")
            assert back.method == method and back.hyper == state.hyper
            assert [a[0] for a in back.anchors] == [a[0] for a in state.anchors]
            for (_, a), (_, b) in zip(state.anchors, back.anchors):
                assert all(np.array_equal(a[n], b[n]) for n in a)
            for a, b in zip(state.importances, back.importances):
                assert all(np.array_equal(a[n], b[n]) for n in a)

    def test_huge_penalty_freezes_parameters(self):
        eps = small_episodes(n=400)
        cfg = TrainConfig(epochs=5)
        # the first episode consumes the same random streams whatever the method
        first, _, _ = train_domain_incremental(mlp(), eps[:1], "none", None, cfg, 0)
        theta0 = first.params.flatten()
        frozen, _, _ = train_domain_incremental(mlp(), eps, "mas", MethodConfig(lam=1e8), cfg, 0)
        free, _, _ = train_domain_incremental(mlp(), eps, "none", None, cfg, 0)
        moved = np.linalg.norm(frozen.params.flatten() - theta0)
        # coordinates with near-zero importance may still drift, so the whole vector is not pinned exactly
        assert moved < 0.1 * np.linalg.norm(free.params.flatten() - theta0)


class TestReplay:
    @pytest.mark.criterion(8)
    def test_reservoir_retention(self):
        cap, n, trials = 10, 100, 10_000
        kept = np.zeros(n)
        for t in range(trials):
            buf = ReplayBuffer(cap, rng_seed=t)
            for i in range(n):
                buffer_insert(buf, i)
            kept[buf.slots] += 1
        p = cap / n
        sigma = math.sqrt(p * (1 - p) / trials)
        # first, boundary and last items all keep probability cap / n
        for i in (0, cap - 1, cap, n // 2, n - 1):
            assert abs(kept[i] / trials - p) < 3 * sigma, i
        # and the counts as a whole are consistent with uniform retention
        chi2 = np.sum((kept - p * trials) ** 2 / (p * trials))
        assert chi2 < n + 4 * math.sqrt(2 * n)

    def test_capacity_one_keeps_each_item_equally(self):
        n, trials = 8, 10_000
        hits = np.zeros(n)
        for t in range(trials):
            buf = ReplayBuffer(1, rng_seed=50_000 + t)
            for i in range(n):
                buffer_insert(buf, i)
            hits[buf.slots[0]] += 1
        sigma = math.sqrt((1 / n) * (1 - 1 / n) / trials)
        assert np.all(np.abs(hits / trials - 1 / n) < 3 * sigma)

    def test_first_inserts_all_retained(self):
        buf = ReplayBuffer(10)
        for i in range(10):
            buffer_insert(buf, i)
        assert buf.slots == list(range(10))

    @pytest.mark.criterion(8)
    def test_minibatch_old_fraction(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(50, rng_seed=1)
        for i in range(200):
            buffer_insert(buf, (rng.normal(size=4), i % 3, 0))
        fracs = []
        for _ in range(1000):
            cur = Arrays(rng.normal(size=(16, 4)), rng.integers(0, 3, 16), np.ones(16, dtype=np.int64))
            batch, n_old = buffer_minibatch(buf, cur, 32)
            assert len(batch) == 32 and np.all(batch.d[:n_old] == 0) and np.all(batch.d[n_old:] == 1)
            fracs.append(n_old / len(batch))
        assert abs(np.mean(fracs) - 0.5) <= 0.01

    def test_short_chunk_and_empty_buffer(self):
        buf = ReplayBuffer(5)
        cur = Arrays(np.zeros((3, 2)), np.zeros(3, int), np.ones(3, dtype=np.int64))
        batch, n_old = buffer_minibatch(buf, cur, 8)
        assert n_old == 0 and len(batch) == 3
        buffer_insert(buf, (np.ones(2), 1, 0))
        batch, n_old = buffer_minibatch(buf, cur, 8)
        assert n_old == 3 and len(batch) == 6

    def test_zero_capacity_counts_but_stores_nothing(self):
        buf = ReplayBuffer(0)
        for i in range(5):
            buffer_insert(buf, i)
        assert buf.seen_count == 5 and len(buf) == 0


@pytest.mark.criterion(4)
@pytest.mark.parametrize("method,hyper", [
    ("ewc", MethodConfig(lam=0.0)), ("ewc_online", MethodConfig(lam=0.0)), ("si", MethodConfig(c=0.0)),
    ("mas", MethodConfig(lam=0.0)), ("naive_rehearsal", MethodConfig(buffer_capacity=0)),
])
def test_degenerate_settings_match_finetuning(tmp_path, method, hyper):
    eps = small_episodes(n=200)

    def trace(name, m, h):
        log = tmp_path / f"{name}.log"
        cfg = TrainConfig(epochs=2, batch_size=16, checksum_log=str(log))
        model, _, _ = train_domain_incremental(mlp(seed=5, dtype=np.float32), eps, m, h, cfg, 7)
        return log.read_text(), model.params.checksum()

    ref = trace("finetune", "none", None)
    got = trace(method, method, hyper)
    assert got[0] == ref[0] and got[1] == ref[1]
    assert ref[0].count("\n") > 10


class TestBaselineHeads:
    def test_dic_frozen_backbone(self):
        eps = small_episodes()
        model = mlp(head=HeadSpec("dic", 2))
        before = model.params.snapshot()
        heads = tuple(model.head_param_names(0) + model.head_param_names(1))
        train_offline(model, eps, TrainConfig(epochs=1, trainable=heads), 0)
        after = model.params.snapshot()
        assert all(np.array_equal(before[n], after[n]) for n in model.backbone_param_names())
        assert any(not np.array_equal(before[n], after[n]) for n in heads)

    def test_strategic_weights_example(self):
        w = strategic_weights({"Male": 900, "Female": 100})
        assert w["Male"] == pytest.approx(1000 / 1800) and w["Female"] == pytest.approx(5.0)
        with pytest.raises(ValueError):
            strategic_weights({"a": 0})

    @given(st.dictionaries(st.text("abc", min_size=1, max_size=3), st.integers(1, 10_000), min_size=1))
    def test_strategic_weighted_mean_is_one(self, counts):
        w = strategic_weights(counts)
        assert sum(w[d] * n for d, n in counts.items()) / sum(counts.values()) == pytest.approx(1.0)
        # every domain carries the same total weight
        totals = [w[d] * n for d, n in counts.items()]
        np.testing.assert_allclose(totals, totals[0])

    def test_history_records_every_episode(self):
        eps = small_episodes()
        _, _, hist = train_domain_incremental(mlp(), eps, "none", None, TrainConfig(epochs=1), 0)
        assert [e.domain for e in hist.episodes] == [e.domain for e in eps]
        assert set(hist.final_accuracy()) == {e.domain for e in eps}

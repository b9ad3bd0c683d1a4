import numpy as np
import pytest

from conftest import record, toy_block
from namesplit.corpus import generate_synthetic_block
from namesplit.embed import (
    DivergenceError,
    NegSamplingConfig,
    draw_negatives,
    init_vectors,
    load_table,
    save_table,
    softmax_context_probs,
    train_pairs,
    train_skipgram,
)
from namesplit.hetnet import build_hetnet, metapath
from namesplit.walker import context_pair_arrays, sample_walks, walk_frequencies


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pair_objective(ci, kc, kts):
    """Eq-style per-pair objective: log sig(ci.kc) + sum log sig(-ci.kt)."""
    val = np.log(sigmoid(ci @ kc))
    for kt in kts:
        val += np.log(sigmoid(-(ci @ kt)))
    return val


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def planted_corpus(n_entities=10, pubs_each=10, seed=101):
    block, truth = generate_synthetic_block(n_entities, pubs_each, seed=seed)
    net = build_hetnet(block)
    path = metapath("PAP")
    walks = sample_walks(net, path, walks_per_node=5, walk_length=10, seed=seed)
    pairs = context_pair_arrays(walks)
    freq = walk_frequencies(walks, len(block))
    return block, net, path, pairs, freq


class TestNegSampling:
    def test_single_support_always_drawn(self):
        cfg = NegSamplingConfig.from_frequencies([0.0, 5.0], negatives=4)
        rng = np.random.default_rng(0)
        assert draw_negatives(cfg, positive=0, rng=rng).tolist() == [1, 1, 1, 1]

    def test_arity(self):
        cfg = NegSamplingConfig.from_frequencies([1.0, 1.0, 1.0], negatives=5)
        assert len(draw_negatives(cfg, 0, np.random.default_rng(1))) == 5

    def test_power_ratio_monte_carlo(self):
        # frequencies 16:1 -> probabilities 16^0.75 : 1 = 8 : 1
        cfg = NegSamplingConfig.from_frequencies([16.0, 1.0, 0.0], negatives=100_000)
        draws = draw_negatives(cfg, positive=2, rng=np.random.default_rng(7))
        counts = np.bincount(draws, minlength=3)
        assert counts[2] == 0
        ratio = counts[0] / counts[1]
        assert abs(ratio - 8.0) <= 0.05 * 8.0

    def test_positive_redrawn_but_bounded(self):
        # noise puts ~95% mass on the positive; without retries ~10 of 200
        # draws would land elsewhere, the bounded retries push that to ~86
        cfg = NegSamplingConfig.from_frequencies([50.0, 1.0], negatives=200)
        draws = draw_negatives(cfg, positive=0, rng=np.random.default_rng(3))
        assert (draws == 1).sum() > 40
        # the retry cap means stubborn draws are kept, not looped forever
        assert (draws == 0).sum() > 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            NegSamplingConfig.from_frequencies([0.0, 0.0])
        with pytest.raises(ValueError):
            NegSamplingConfig.from_frequencies([1.0], negatives=0)


class TestSingleStepOracle:
    def test_update_matches_closed_form(self):
        rng = np.random.default_rng(42)
        d = 8
        C0 = rng.normal(size=(3, d))
        K0 = rng.normal(size=(3, d))
        lr = 0.05
        cfg = NegSamplingConfig.from_frequencies([0.0, 0.0, 9.0], negatives=1)
        C, K, _ = train_pairs(
            np.array([0]), np.array([1]), C0, K0, cfg,
            epochs=1, lr0=lr, lr_min=0.0, seed=5,
        )
        # hand-computed simultaneous-step gradients of the pair objective
        gp = sigmoid(C0[0] @ K0[1])
        gn = sigmoid(C0[0] @ K0[2])
        expC = C0.copy()
        expK = K0.copy()
        expC[0] += lr * ((1 - gp) * K0[1] - gn * K0[2])
        expK[1] += lr * (1 - gp) * C0[0]
        expK[2] += lr * (-gn) * C0[0]
        assert np.allclose(C, expC, atol=1e-6)
        assert np.allclose(K, expK, atol=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        d = 6
        ci = rng.normal(scale=0.5, size=d)
        kc = rng.normal(scale=0.5, size=d)
        kts = [rng.normal(scale=0.5, size=d) for _ in range(2)]
        analytic_ci = (1 - sigmoid(ci @ kc)) * kc - sum(
            sigmoid(ci @ kt) * kt for kt in kts
        )
        analytic_kc = (1 - sigmoid(ci @ kc)) * ci
        analytic_kt0 = -sigmoid(ci @ kts[0]) * ci
        h = 1e-6
        for vec, grad in ((ci, analytic_ci), (kc, analytic_kc), (kts[0], analytic_kt0)):
            fd = np.empty(d)
            for k in range(d):
                up, dn = vec.copy(), vec.copy()
                up[k] += h
                dn[k] -= h
                args_up = dict(ci=ci, kc=kc, kts=kts)
                args_dn = dict(ci=ci, kc=kc, kts=kts)
                if vec is ci:
                    args_up["ci"], args_dn["ci"] = up, dn
                elif vec is kc:
                    args_up["kc"], args_dn["kc"] = up, dn
                else:
                    args_up["kts"] = [up, kts[1]]
                    args_dn["kts"] = [dn, kts[1]]
                fd[k] = (pair_objective(**args_up) - pair_objective(**args_dn)) / (2 * h)
            assert np.abs(fd - grad).max() / max(np.abs(grad).max(), 1e-12) < 1e-4


class TestTrainSkipgram:
    def test_zero_epochs_identity(self):
        cfg = NegSamplingConfig.from_frequencies([1.0, 1.0], negatives=1)
        init = np.arange(8, dtype=float).reshape(2, 4)
        table, _ = train_skipgram((np.array([0]), np.array([1])), init, cfg, epochs=0)
        assert np.array_equal(table.vectors, init)

    def test_cooccurring_pair_ranks_higher(self):
        # p0 and p1 always co-occur, p2 never appears; background pubs 3-5
        # absorb the negative mass so the separable optimum is visible
        pairs = [(0, 1), (1, 0)] * 200 + \
            [(3, 4), (4, 3), (3, 5), (5, 3), (4, 5), (5, 4)] * 100
        centers = np.array([p[0] for p in pairs])
        contexts = np.array([p[1] for p in pairs])
        freq = np.bincount(np.concatenate([centers, contexts]), minlength=6)
        rng = np.random.default_rng(2)
        init = rng.normal(scale=0.1, size=(6, 16))
        cfg = NegSamplingConfig.from_frequencies(freq, negatives=3)
        table, _ = train_skipgram((centers, contexts), init, cfg, epochs=5, seed=3)
        z = table.vectors
        assert cosine(z[0], z[1]) > cosine(z[0], z[2])

    def test_objective_non_decreasing(self):
        _, _, _, pairs, freq = planted_corpus()
        cfg = NegSamplingConfig.from_frequencies(freq, negatives=5)
        init = np.random.default_rng(1).normal(scale=0.05, size=(100, 50))
        _, objectives = train_skipgram(pairs, init, cfg, epochs=5, seed=4)
        for a, b in zip(objectives, objectives[1:]):
            assert b >= a - 0.01 * abs(a)

    def test_bit_identical_across_runs(self):
        _, _, _, pairs, freq = planted_corpus(4, 5, seed=55)
        cfg = NegSamplingConfig.from_frequencies(freq, negatives=5)
        init = np.random.default_rng(8).normal(scale=0.05, size=(20, 24))
        t1, _ = train_skipgram(pairs, init, cfg, epochs=3, seed=12)
        t2, _ = train_skipgram(pairs, init, cfg, epochs=3, seed=12)
        assert np.array_equal(t1.vectors, t2.vectors)
        assert np.array_equal(t1.context_vectors, t2.context_vectors)

    def test_entries_stay_bounded(self):
        _, _, _, pairs, freq = planted_corpus(4, 5, seed=56)
        cfg = NegSamplingConfig.from_frequencies(freq, negatives=5)
        init = np.random.default_rng(2).normal(scale=0.05, size=(20, 24))
        table, _ = train_skipgram(pairs, init, cfg, epochs=10, seed=1)
        assert np.abs(table.vectors).max() < 1e3
        assert np.abs(table.context_vectors).max() < 1e3

    def test_hogwild_mode_trains(self):
        _, _, _, pairs, freq = planted_corpus(4, 5, seed=57)
        cfg = NegSamplingConfig.from_frequencies(freq, negatives=5)
        init = np.random.default_rng(3).normal(scale=0.05, size=(20, 24))
        table, objectives = train_skipgram(
            pairs, init, cfg, epochs=3, seed=1, mode="parallel", threads=2
        )
        assert np.isfinite(table.vectors).all()
        assert objectives[-1] > objectives[0] - 0.05 * abs(objectives[0])

    def test_divergence_detected(self):
        cfg = NegSamplingConfig.from_frequencies([1.0, 1.0], negatives=1)
        center = np.zeros((2, 4))
        context = np.full((2, 4), np.inf)
        with pytest.raises(DivergenceError):
            train_pairs(
                np.array([0, 1] * 4), np.array([1, 0] * 4), center, context,
                cfg, epochs=3,
            )


class TestInitVectors:
    def test_identical_orgs_identical_init(self):
        block = toy_block([
            record("p1", authors=[("wei li", "Dept of CS, Uni A")]),
            record("p2", authors=[("wei li", "Dept of CS, Uni A")]),
            record("p3", authors=[("wei li", "Other Place")]),
        ])
        z0 = init_vectors(block, metapath("POP"), dim=16, seed=3)
        assert np.array_equal(z0[0], z0[1])
        assert not np.array_equal(z0[0], z0[2])

    def test_missing_attribute_seeded_fallback(self):
        block = toy_block([
            record("p1", authors=["wei li"], venue=""),
            record("p2", authors=["wei li"], venue="VLDB"),
        ])
        a = init_vectors(block, metapath("PVP"), dim=12, seed=5)
        b = init_vectors(block, metapath("PVP"), dim=12, seed=5)
        assert np.array_equal(a, b)
        assert np.abs(a[0]).max() <= 0.5 / 12

    def test_within_entity_cosine_exceeds_cross(self):
        block, truth = generate_synthetic_block(4, 8, seed=61)
        owner = {}
        for k, ent in enumerate(truth.entities[block.name]):
            for pid in ent:
                owner[pid] = k
        z0 = init_vectors(block, metapath("PAP"), dim=32, seed=6)
        within, cross = [], []
        for i in range(len(block)):
            for j in range(i + 1, len(block)):
                c = cosine(z0[i], z0[j])
                same = owner[block.pubs[i].id] == owner[block.pubs[j].id]
                (within if same else cross).append(c)
        assert np.mean(within) > np.mean(cross)


class TestReferenceSoftmax:
    def test_training_raises_observed_pair_probability(self):
        centers = np.array([0, 1] * 300)
        contexts = np.array([1, 0] * 300)
        rng = np.random.default_rng(4)
        init = rng.normal(scale=0.1, size=(4, 12))
        cfg = NegSamplingConfig.from_frequencies([1, 1, 1, 1.0], negatives=4)
        before, _ = train_skipgram((centers, contexts), init, cfg, epochs=0)
        after, _ = train_skipgram((centers, contexts), init, cfg, epochs=5, seed=2)
        assert softmax_context_probs(after, 0)[1] > softmax_context_probs(before, 0)[1]

    def test_size_guard(self):
        big, _ = train_skipgram(
            (np.array([0]), np.array([1])),
            np.zeros((201, 4)),
            NegSamplingConfig.from_frequencies(np.ones(201), 1),
            epochs=0,
        )
        with pytest.raises(ValueError):
            softmax_context_probs(big, 0)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        vecs = rng.normal(size=(7, 5)).astype(np.float32)
        ids = [f"pub{i}" for i in range(7)]
        save_table(vecs, ids, tmp_path / "t.emb")
        got_ids, got = load_table(tmp_path / "t.emb")
        assert got_ids == ids
        assert np.array_equal(got, vecs)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "junk.emb").write_bytes(b"nope" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_table(tmp_path / "junk.emb")

import json

import numpy as np
import pytest

from oracles import prf_brute_force
from namesplit.evaluation import (
    NameResult,
    REFERENCE_MACRO_F1,
    macro_pairwise_f1,
    make_report,
    pairwise_prf,
    report_dict,
    write_report,
)


def random_partition(rng, ids):
    k = int(rng.integers(1, len(ids) + 1))
    labels = rng.integers(0, k, size=len(ids))
    groups = {}
    for pid, lab in zip(ids, labels):
        groups.setdefault(int(lab), set()).add(pid)
    return list(groups.values())


class TestPairwisePrf:
    def test_hand_case(self):
        truth = [{1, 2, 3}, {4, 5}]
        pred = [{1, 2}, {3, 4, 5}]
        p, r, f1 = pairwise_prf(pred, truth)
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_identity(self):
        truth = [{1, 2}, {3}]
        assert pairwise_prf(truth, truth) == (1.0, 1.0, 1.0)

    def test_all_singletons_convention(self):
        sets = [{1}, {2}, {3}]
        assert pairwise_prf(sets, sets) == (1.0, 1.0, 1.0)

    def test_one_side_empty_pairs(self):
        truth = [{1, 2}]
        pred = [{1}, {2}]
        assert pairwise_prf(pred, truth) == (0.0, 0.0, 0.0)
        assert pairwise_prf(truth, pred) == (0.0, 0.0, 0.0)

    def test_unlabeled_pubs_dropped(self):
        truth = [{1, 2}]
        pred = [{1, 2, 99}]
        assert pairwise_prf(pred, truth) == (1.0, 1.0, 1.0)

    def test_missing_labeled_pub_is_hard_error(self):
        with pytest.raises(ValueError, match="missing"):
            pairwise_prf([{1}], [{1, 2}])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(123)
        for trial in range(1000):
            n = int(rng.integers(1, 13))
            ids = list(range(n))
            truth = random_partition(rng, ids)
            pred = random_partition(rng, ids)
            assert pairwise_prf(pred, truth) == prf_brute_force(pred, truth)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            ids = list(range(int(rng.integers(2, 10))))
            a = random_partition(rng, ids)
            b = random_partition(rng, ids)
            p1, r1, f1 = pairwise_prf(a, b)
            p2, r2, f2 = pairwise_prf(b, a)
            assert np.isclose(p1, r2) and np.isclose(r1, p2) and np.isclose(f1, f2)

    def test_singleton_truth_kills_recall(self):
        pred = [{1, 2, 3}]
        truth = [{1}, {2}, {3}]
        p, r, f1 = pairwise_prf(pred, truth)
        assert (p, r, f1) == (0.0, 0.0, 0.0)


class TestMacro:
    def _res(self, name, f1):
        return NameResult(name=name, precision=f1, recall=f1, f1=f1,
                          n_pubs=4, n_pred_clusters=2, n_true_entities=2)

    def test_mean(self):
        assert macro_pairwise_f1([self._res("a", 1.0), self._res("b", 0.5)]) == 0.75

    def test_single_name(self):
        assert macro_pairwise_f1([self._res("a", 0.7)]) == 0.7

    def test_empty_input_hard_error(self):
        with pytest.raises(ValueError):
            macro_pairwise_f1([])

    def test_reference_scores_present(self):
        assert REFERENCE_MACRO_F1 == {"aminer": 0.897, "citeseerx": 0.719}


class TestWriteReport:
    def _report(self):
        results = [
            NameResult(name="li wei", precision=1.0, recall=0.5, f1=2 / 3,
                       n_pubs=6, n_pred_clusters=3, n_true_entities=2,
                       alphas={"PAP": 0.4, "POP": 0.3, "PVP": 0.2, "PWP": 0.1}),
            NameResult(name="j smith", precision=1.0, recall=1.0, f1=1.0,
                       n_pubs=4, n_pred_clusters=2, n_true_entities=2,
                       alphas={"PAP": 0.25, "POP": 0.25, "PVP": 0.25, "PWP": 0.25}),
        ]
        return make_report(results, config={"beta": 0.5, "seed": 1})

    def test_byte_identical(self, tmp_path):
        report = self._report()
        write_report(report, tmp_path / "a.json")
        write_report(report, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_macro_recomputable_from_per_name(self, tmp_path):
        report = self._report()
        write_report(report, tmp_path / "r.json")
        loaded = json.loads((tmp_path / "r.json").read_text())
        per_name = [v["f1"] for v in loaded["names"].values()]
        assert np.isclose(loaded["macro_pairwise_f1"], np.mean(per_name))
        assert loaded["config"] == {"beta": 0.5, "seed": 1}

    def test_alphas_sum_to_one(self):
        d = report_dict(self._report())
        for entry in d["names"].values():
            assert np.isclose(sum(entry["alphas"].values()), 1.0)

    def test_unwritable_path_errors(self, tmp_path):
        with pytest.raises(OSError):
            write_report(self._report(), tmp_path / "no" / "such" / "dir" / "r.json")

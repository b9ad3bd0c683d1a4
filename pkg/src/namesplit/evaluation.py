"""Pairwise precision / recall / F1 against labeled author entities.

Scores compare unordered same-cluster pub pairs between prediction and
truth; the macro score is the unweighted mean of per-name F1. Degenerate
conventions: both pair sets empty scores (1, 1, 1), exactly one empty
scores (0, 0, 0).
"""

import json
from dataclasses import dataclass, field


@dataclass
class NameResult:
    name: str
    precision: float
    recall: float
    f1: float
    n_pubs: int
    n_pred_clusters: int
    n_true_entities: int
    n_excluded: int = 0
    alphas: dict = field(default_factory=dict)
    method: str = ""


@dataclass
class EvalReport:
    results: list
    macro_f1: float
    config: dict = field(default_factory=dict)


def _pair_count(k):
    return k * (k - 1) // 2


def pairwise_prf(pred, truth):
    """Pairwise (precision, recall, f1) between two families of id sets.

    Ids missing from the truth are dropped from the prediction before
    scoring; truth ids the prediction never covers are a hard error.
    """
    pred = [set(c) for c in pred]
    truth = [set(c) for c in truth]
    truth_ids = set().union(*truth) if truth else set()
    pred = [c & truth_ids for c in pred]
    covered = set().union(*pred) if pred else set()
    if covered != truth_ids:
        missing = sorted(truth_ids - covered)[:5]
        raise ValueError(f"prediction is missing labeled pubs, e.g. {missing}")

    pred_pairs = sum(_pair_count(len(c)) for c in pred)
    true_pairs = sum(_pair_count(len(c)) for c in truth)
    common = 0
    for tc in truth:
        for pc in pred:
            common += _pair_count(len(tc & pc))

    if pred_pairs == 0 and true_pairs == 0:
        return 1.0, 1.0, 1.0
    precision = common / pred_pairs if pred_pairs else 0.0
    recall = common / true_pairs if true_pairs else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# full-dataset reference points included in reports for orientation; desk-scale
# runs are not expected to reproduce them
REFERENCE_MACRO_F1 = {"aminer": 0.897, "citeseerx": 0.719}


def macro_pairwise_f1(results):
    """Unweighted mean F1 over names."""
    results = list(results)
    if not results:
        raise ValueError("macro F1 over zero names is undefined")
    return sum(r.f1 for r in results) / len(results)


def make_report(results, config=None):
    return EvalReport(
        results=sorted(results, key=lambda r: r.name),
        macro_f1=macro_pairwise_f1(results),
        config=dict(config or {}),
    )


def report_dict(report):
    return {
        "macro_pairwise_f1": report.macro_f1,
        "reference_full_scale": REFERENCE_MACRO_F1,
        "names": {
            r.name: {
                "precision": r.precision,
                "recall": r.recall,
                "f1": r.f1,
                "n_pubs": r.n_pubs,
                "n_pred_clusters": r.n_pred_clusters,
                "n_true_entities": r.n_true_entities,
                "n_excluded": r.n_excluded,
                "alphas": r.alphas,
                "method": r.method,
            }
            for r in report.results
        },
        "config": report.config,
    }


def write_report(report, path):
    """Deterministic JSON dump: sorted keys, fixed layout, newline terminated."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_dict(report), f, sort_keys=True, indent=2)
        f.write("\n")
    return path

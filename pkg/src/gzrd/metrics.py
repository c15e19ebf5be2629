"""Classification metrics over scored examples.

Conventions used throughout:

* a score equal to the threshold counts as a positive prediction;
* a ratio with an empty denominator is reported as 0 and named in ``flags``;
* PR curves use every distinct score as a threshold, highest first.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UndefinedMetricError

SPAN_EDGES = (0.0, 5.0, 20.0)
SPAN_BUCKETS = ("0-5", "5-20", "20+")


@dataclass
class ScoredExample:
    score: object  # float P(positive) or a length-k probability vector
    label: int
    meta: dict = field(default_factory=dict)
    span_deg: float | None = None

    def __post_init__(self):
        s = np.asarray(self.score, dtype=np.float64)
        if not np.all(np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
            raise DataError(f"score {self.score!r} is not a finite probability")


def _arrays(examples):
    scores = np.array([float(e.score) for e in examples], dtype=np.float64)
    labels = np.array([int(e.label) for e in examples], dtype=np.int64)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise DataError("binary metrics need labels in {0, 1}")
    return scores, labels


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


@dataclass
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5
    flags: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def derived(self) -> dict:
        flags = list(self.flags)
        acc = _ratio(self.tp + self.tn, self.n, "accuracy_undefined", flags)
        precision = _ratio(self.tp, self.tp + self.fp, "precision_undefined", flags)
        recall = _ratio(self.tp, self.tp + self.fn, "recall_undefined", flags)
        f1 = _ratio(2 * precision * recall, precision + recall, "f1_zero_denominator", flags)
        return {"accuracy": acc, "precision": precision, "recall": recall, "f1": f1, "flags": flags}

    def to_dict(self) -> dict:
        d = {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "n": self.n, "threshold": self.threshold}
        d.update(self.derived())
        return d

    @property
    def accuracy(self) -> float:
        return self.derived()["accuracy"]

    @property
    def precision(self) -> float:
        return self.derived()["precision"]

    @property
    def recall(self) -> float:
        return self.derived()["recall"]

    @property
    def f1(self) -> float:
        return self.derived()["f1"]


def confusion_arrays(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> Confusion:
    pred = scores >= threshold
    pos = labels == 1
    return Confusion(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
        threshold=float(threshold),
    )


def confusion(examples, threshold: float = 0.5) -> Confusion:
    return confusion_arrays(*_arrays(examples), threshold)


# -- PR curve ---------------------------------------------------------------------------
@dataclass
class PrCurve:
    thresholds: np.ndarray  # distinct scores, descending
    precision: np.ndarray
    recall: np.ndarray
    n_pos: int
    n_neg: int

    def point(self, threshold: float) -> tuple[float, float]:
        """(precision, recall) of thresholding at ``threshold``."""
        i = np.searchsorted(-self.thresholds, -threshold, side="right") - 1
        if i < 0:
            return 0.0, 0.0
        return float(self.precision[i]), float(self.recall[i])

    def rows(self):
        return zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist())


def pr_curve_arrays(scores: np.ndarray, labels: np.ndarray) -> PrCurve:
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR curve needs at least one positive example")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores: everything >= that score is predicted positive
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return PrCurve(
        thresholds=s[last],
        precision=tp[last] / (tp[last] + fp[last]),
        recall=tp[last] / n_pos,
        n_pos=n_pos,
        n_neg=len(labels) - n_pos,
    )


def pr_curve(examples) -> PrCurve:
    return pr_curve_arrays(*_arrays(examples))


def auc(curve: PrCurve) -> float:
    """Trapezoid area under precision over recall, starting from (recall 0, precision 1)."""
    r = np.r_[0.0, curve.recall]
    p = np.r_[1.0, curve.precision]
    # fsum keeps the area independent of summation order
    return math.fsum(((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0).tolist())


def precision_at_recall(examples_or_curve, r: float = 0.9, interpolated: bool = False) -> tuple[float, float]:
    """(precision, threshold) at the highest threshold whose recall reaches ``r``.

    With ``interpolated`` the precision is the best one at any recall >= ``r``,
    which makes it non-increasing in ``r``; the threshold returned is still the
    highest one reaching ``r``.
    """
    if not 0.0 < r <= 1.0:
        raise UndefinedMetricError("target recall must lie in (0, 1]")
    curve = examples_or_curve if isinstance(examples_or_curve, PrCurve) else pr_curve(examples_or_curve)
    i = int(np.argmax(curve.recall >= r - 1e-12))
    precision = float(curve.precision[i:].max() if interpolated else curve.precision[i])
    return precision, float(curve.thresholds[i])


def roc_auc_arrays(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative (ties count half)."""
    pos, neg = scores[labels == 1], scores[labels == 0]
    if not len(pos) or not len(neg):
        raise UndefinedMetricError("ROC AUC needs both classes")
    ranks = _average_ranks(np.r_[pos, neg])
    return float((ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2) / (len(pos) * len(neg)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sx = x[order]
    ranks = np.empty(len(x))
    starts = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1]])
    ends = np.r_[starts[1:], len(x)]
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


# -- multiclass --------------------------------------------------------------------------
@dataclass
class MulticlassConfusion:
    counts: np.ndarray  # [k, k], rows = truth, columns = argmax prediction
    flags: list = field(default_factory=list)

    @property
    def matrix(self) -> np.ndarray:
        """Row-normalised; rows of absent classes stay zero."""
        totals = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, totals, out=np.zeros(self.counts.shape), where=totals > 0)

    @property
    def balanced_accuracy(self) -> float:
        totals = self.counts.sum(axis=1)
        present = totals > 0
        return float(np.mean(np.diag(self.counts)[present] / totals[present]))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def to_dict(self, classes=None) -> dict:
        return {
            "classes": list(classes) if classes is not None else list(range(len(self.counts))),
            "counts": self.counts.tolist(),
            "matrix": self.matrix.tolist(),
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "flags": self.flags,
        }


def multiclass_confusion_arrays(probs: np.ndarray, labels: np.ndarray, k: int | None = None) -> MulticlassConfusion:
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[1] if k is None else k
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in 0..{k - 1}")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, probs.argmax(axis=1)), 1)
    flags = [f"class_{c}_absent" for c in range(k) if counts[c].sum() == 0]
    return MulticlassConfusion(counts, flags)


def multiclass_confusion(examples, k: int | None = None) -> MulticlassConfusion:
    probs = np.stack([np.asarray(e.score, dtype=np.float64) for e in examples])
    labels = np.array([int(e.label) for e in examples], dtype=np.int64)
    return multiclass_confusion_arrays(probs, labels, k)


# -- breakdowns --------------------------------------------------------------------------
def span_bucket(span_deg: float) -> str:
    if span_deg is None or not math.isfinite(span_deg) or span_deg < 0:
        raise DataError(f"gaze span {span_deg!r} is not a valid angle")
    return SPAN_BUCKETS[int(np.searchsorted(SPAN_EDGES, span_deg, side="right")) - 1]


def group_key(example: ScoredExample, key: str) -> str:
    if key == "gaze_span_bucket":
        return span_bucket(example.span_deg)
    if key not in example.meta:
        raise DataError(f"example has no {key!r} metadata")
    return str(example.meta[key])


def breakdown(examples, key: str, threshold: float = 0.5) -> dict:
    """Group name -> confusion counts and derived metrics, in sorted group order."""
    groups = {}
    for e in examples:
        groups.setdefault(group_key(e, key), []).append(e)
    return {g: confusion(groups[g], threshold).to_dict() for g in sorted(groups)}


# -- summary and output --------------------------------------------------------------------
def binary_summary(examples, threshold: float = 0.5, recall_target: float = 0.9) -> dict:
    scores, labels = _arrays(examples)
    out = {"n": len(labels), "confusion": confusion_arrays(scores, labels, threshold).to_dict()}
    if labels.sum() and (labels == 0).sum():
        curve = pr_curve_arrays(scores, labels)
        p, t = precision_at_recall(curve, recall_target)
        out["pr_auc"] = auc(curve)
        out["roc_auc"] = roc_auc_arrays(scores, labels)
        out[f"precision_at_recall_{recall_target:g}"] = {"precision": p, "threshold": t}
        # accuracy with the threshold pinned to the recall target
        out[f"accuracy_at_recall_{recall_target:g}"] = confusion_arrays(scores, labels, t).derived()["accuracy"]
    else:
        out["flags"] = ["single_class: curve metrics undefined"]
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_pr_csv(path, curve: PrCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve.rows():
            w.writerow([repr(t), repr(p), repr(r)])

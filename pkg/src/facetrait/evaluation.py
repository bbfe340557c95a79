"""Confusion counts, accuracy / macro F-measure, ROC curves and latency."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .store import GenderLabel


@dataclass(frozen=True)
class ConfusionCounts:
    """The four counts of a Female/Male confusion matrix.

    ``false_females`` are Male records predicted Female; ``false_males`` are
    Female records predicted Male.
    """

    true_females: int
    true_males: int
    false_females: int
    false_males: int

    def __post_init__(self):
        if min(self.true_females, self.true_males, self.false_females, self.false_males) < 0:
            raise ContractError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.true_females + self.true_males + self.false_females + self.false_males

    def as_tuple(self):
        return (self.true_females, self.true_males, self.false_females, self.false_males)

    def matrix(self) -> np.ndarray:
        """Rows are truth (Female, Male), columns predictions."""
        return np.array([[self.true_females, self.false_males],
                         [self.false_females, self.true_males]])


def confusion_from_predictions(truth, predicted) -> ConfusionCounts:
    truth = np.asarray(truth, dtype=np.int64).ravel()
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    if truth.size != predicted.size:
        raise ContractError(f"length mismatch: {truth.size} truths, {predicted.size} predictions")
    if truth.size == 0:
        raise ContractError("no predictions")
    if np.any((truth > 1) | (truth < 0)) or np.any((predicted > 1) | (predicted < 0)):
        raise ContractError("labels must be 0 (Female) or 1 (Male)")
    tf = int(np.sum((truth == 0) & (predicted == 0)))
    tm = int(np.sum((truth == 1) & (predicted == 1)))
    ff = int(np.sum((truth == 1) & (predicted == 0)))
    fm = int(np.sum((truth == 0) & (predicted == 1)))
    return ConfusionCounts(tf, tm, ff, fm)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ContractError("accuracy of an empty confusion matrix")
    return (c.true_males + c.true_females) / c.total


def _ratio(num, den, flags, name):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def macro_terms(c: ConfusionCounts):
    """Macro recall, macro precision and the names of zero-denominator terms."""
    flags = []
    tf, tm, ff, fm = c.as_tuple()
    recall = 0.5 * (_ratio(tf, tf + fm, flags, "recall_female")
                    + _ratio(tm, tm + ff, flags, "recall_male"))
    precision = 0.5 * (_ratio(tf, tf + ff, flags, "precision_female")
                       + _ratio(tm, tm + fm, flags, "precision_male"))
    return recall, precision, tuple(flags)


def macro_recall_precision(c: ConfusionCounts):
    """Per-class recall and precision averaged over the two classes."""
    recall, precision, _ = macro_terms(c)
    return recall, precision


def f_measure(c: ConfusionCounts) -> float:
    recall, precision = macro_recall_precision(c)
    if recall + precision == 0:
        return 0.0
    if recall == precision:
        return recall
    return 2.0 * recall * precision / (recall + precision)


def table1_percentages(c: ConfusionCounts):
    """(accuracy %, F1 %) rounded to 1 and 2 decimals."""
    return round(100.0 * accuracy(c), 1), round(100.0 * f_measure(c), 2)


# -- ROC -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RocCurve:
    points: np.ndarray  # (k, 2) rows of (fpr, tpr)
    auc: float
    positive: GenderLabel

    def to_dict(self):
        return {"positive": self.positive.name.lower(),
                "points": [[float(a), float(b)] for a, b in self.points],
                "auc": float(self.auc)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["points"], dtype=np.float64).reshape(-1, 2), float(d["auc"]),
                   GenderLabel.parse(d["positive"]))


def roc_curve(truth, scores, positive=GenderLabel.MALE) -> RocCurve:
    """Threshold sweep over distinct scores, highest first.

    Records sharing a score enter together, giving a diagonal segment. The
    area is the trapezoidal sum, accumulated over integer counts.
    """
    truth = np.asarray(truth).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if truth.size != scores.size:
        raise ContractError("truth and scores differ in length")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    is_pos = truth == int(positive)
    P = int(is_pos.sum())
    N = truth.size - P
    if P == 0 or N == 0:
        raise ContractError("ROC needs both classes in truth")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = is_pos[order].astype(np.int64)
    tp = np.cumsum(pos)
    fp = np.cumsum(1 - pos)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, tp[ends]]
    fp = np.r_[0, fp[ends]]
    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    points = np.column_stack([fp / N, tp / P])
    return RocCurve(points, area2 / (2.0 * P * N), GenderLabel(int(positive)))


def auc(truth, scores, positive=GenderLabel.MALE) -> float:
    return roc_curve(truth, scores, positive).auc


# -- latency -------------------------------------------------------------------

def measure_latency(predict, inputs, warmup: int = 1, reps: int = 5) -> dict:
    """Per-prediction wall time. Each rep times one pass over ``inputs``."""
    if reps < 1:
        raise ContractError("reps must be >= 1")
    inputs = list(inputs)
    if not inputs:
        raise ContractError("no inputs to time")
    for _ in range(warmup):
        for x in inputs:
            predict(x)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for x in inputs:
            predict(x)
        samples.append((time.perf_counter() - t0) / len(inputs))
    samples = np.array(samples)
    return {"mean_s": float(samples.mean()),
            "p50_s": float(np.percentile(samples, 50)),
            "p95_s": float(np.percentile(samples, 95))}


# -- report --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvalReport:
    confusion: ConfusionCounts
    accuracy: float
    macro_recall: float
    macro_precision: float
    f_measure: float
    roc_female: RocCurve | None
    roc_male: RocCurve | None
    latency: dict = field(default_factory=dict)
    model_tag: str = ""
    degenerate: tuple = ()

    def to_dict(self):
        c = self.confusion
        lat = self.latency or {}
        return {
            "confusion": {"tf": c.true_females, "tm": c.true_males,
                          "ff": c.false_females, "fm": c.false_males},
            "accuracy": self.accuracy,
            "macro_recall": self.macro_recall,
            "macro_precision": self.macro_precision,
            "f_measure": self.f_measure,
            "roc": {
                "female": self.roc_female.to_dict() if self.roc_female else None,
                "male": self.roc_male.to_dict() if self.roc_male else None,
            },
            "latency": {k: lat.get(k) for k in ("mean_s", "p50_s", "p95_s")},
            "model_tag": self.model_tag,
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        c = d["confusion"]
        conf = ConfusionCounts(c["tf"], c["tm"], c["ff"], c["fm"])
        roc = d.get("roc") or {}
        _, _, flags = macro_terms(conf)
        return cls(conf, d["accuracy"], d["macro_recall"], d["macro_precision"],
                   d["f_measure"],
                   RocCurve.from_dict(roc["female"]) if roc.get("female") else None,
                   RocCurve.from_dict(roc["male"]) if roc.get("male") else None,
                   {k: v for k, v in (d.get("latency") or {}).items() if v is not None},
                   d.get("model_tag", ""), flags)

    def summary_line(self) -> str:
        acc, f1 = table1_percentages(self.confusion)
        c = self.confusion
        return (f"{self.model_tag}\tTF={c.true_females} TM={c.true_males} "
                f"FF={c.false_females} FM={c.false_males}\tacc={acc:.1f}%\tF1={f1:.2f}%")

    def write(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(self.to_json())
        os.replace(tmp, path)


def evaluate(truth, predicted, male_scores=None, model_tag="", latency=None) -> EvalReport:
    """Build a report; ROC curves need continuous Male scores and both classes."""
    c = confusion_from_predictions(truth, predicted)
    recall, precision, flags = macro_terms(c)
    roc_f = roc_m = None
    truth = np.asarray(truth).ravel()
    if male_scores is not None and 0 < int(truth.sum()) < truth.size:
        male_scores = np.asarray(male_scores, dtype=np.float64)
        roc_m = roc_curve(truth, male_scores, GenderLabel.MALE)
        roc_f = roc_curve(truth, -male_scores, GenderLabel.FEMALE)
    return EvalReport(c, accuracy(c), recall, precision, f_measure(c), roc_f, roc_m,
                      dict(latency or {}), model_tag, flags)

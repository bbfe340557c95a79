"""The "table1" benchmark suite and ROC artifact writers."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .evaluation import ConfusionCounts, EvalReport, RocCurve, evaluate
from .models import train_model
from .store import EmbeddingDataset

log = logging.getLogger(__name__)

CSV_HEADER = ["model", "settings", "tf", "tm", "ff", "fm", "accuracy_pct", "f1_pct",
              "train_s", "eval_s", "notes"]


@dataclass(frozen=True)
class SuiteEntry:
    model: str
    settings: str
    family: str
    overrides: dict = field(default_factory=dict)


TABLE1 = (
    SuiteEntry("SVM", "Kernel: Gaussian", "svm", {"kernel": "gaussian"}),
    SuiteEntry("SVM", "Kernel: Quadratic", "svm", {"kernel": "quadratic"}),
    SuiteEntry("SVM", "Kernel: Cubic", "svm", {"kernel": "cubic"}),
    SuiteEntry("SVM", "Kernel: Linear", "svm", {"kernel": "linear"}),
    SuiteEntry("Logistic Regression", "-", "logreg"),
    SuiteEntry("Linear Discriminant", "Covariance Structure: Full", "lda"),
    SuiteEntry("KNN", "Cosine Distance K=1", "knn",
               {"k": 1, "metric": "cosine", "weighting": "uniform"}),
    SuiteEntry("KNN", "Euc. Distance Weighted K=10", "knn",
               {"k": 10, "metric": "euclidean", "weighting": "inverse"}),
    SuiteEntry("KNN", "Euc. Distance K=10", "knn",
               {"k": 10, "metric": "euclidean", "weighting": "uniform"}),
    SuiteEntry("KNN", "Euc. Distance K=100", "knn",
               {"k": 100, "metric": "euclidean", "weighting": "uniform"}),
    SuiteEntry("MLP", "Hidden Layers: 1 Neurons: 1000", "mlp", {"hidden": [1000]}),
    SuiteEntry("MLP", "Hidden Layers: 3 Neurons: {10,10,10}", "mlp", {"hidden": [10, 10, 10]}),
    SuiteEntry("MLP", "Hidden Layers: 1 Neurons: 10", "mlp", {"hidden": [10]}),
    SuiteEntry("MLP", "Hidden Layers: 2 Neurons: {10,10}", "mlp", {"hidden": [10, 10]}),
    SuiteEntry("MLP", "Hidden Layers: 1 Neurons: 100", "mlp", {"hidden": [100]}),
    SuiteEntry("Ensembles", "Subspace Discriminant", "subspace"),
    SuiteEntry("Ensembles", "Bagged Trees", "bagging"),
    SuiteEntry("Ensembles", "Boosted Trees", "adaboost"),
    SuiteEntry("Ensembles", "RUSBoosted Trees", "rusboost"),
    SuiteEntry("Naïve Bayes", "Gaussian", "gnb"),
    SuiteEntry("Decision Tree", "Max # of Splits: 100", "tree", {"max_splits": 100}),
    SuiteEntry("Decision Tree", "Max # of Splits: 20", "tree", {"max_splits": 20}),
    SuiteEntry("Decision Tree", "Max # of Splits: 4", "tree", {"max_splits": 4}),
)

SUITES = {"table1": TABLE1}

_SEEDED = ("svm", "bagging", "adaboost", "rusboost", "subspace", "mlp")


@dataclass
class BenchRow:
    entry: SuiteEntry
    confusion: ConfusionCounts | None = None
    train_s: float = 0.0
    eval_s: float = 0.0
    notes: str = ""
    error: str | None = None
    report: EvalReport | None = None

    def csv_fields(self):
        e = self.entry
        if self.confusion is None:
            return [e.model, e.settings, "", "", "", "", "", "",
                    f"{self.train_s:.3f}", f"{self.eval_s:.3f}", f"ERROR: {self.error}"]
        c = self.confusion
        acc, f1 = self.report.accuracy, self.report.f_measure
        return [e.model, e.settings, c.true_females, c.true_males, c.false_females,
                c.false_males, f"{100 * acc:.1f}", f"{100 * f1:.2f}",
                f"{self.train_s:.3f}", f"{self.eval_s:.3f}", self.notes]


def _run_entry(entry, train, val, seed, svm_subsample):
    overrides = dict(entry.overrides)
    notes = []
    if entry.family in _SEEDED:
        overrides["seed"] = seed
    if entry.family == "svm" and svm_subsample and len(train) > svm_subsample:
        overrides["subsample"] = svm_subsample
        notes.append(f"svm_subsample={svm_subsample}")
    row = BenchRow(entry)
    t0 = time.perf_counter()
    try:
        model = train_model(entry.family, train, overrides)
        row.train_s = time.perf_counter() - t0
        t1 = time.perf_counter()
        X = val.X()
        scores = model.scores(X)
        predicted = model.predict(X)
        row.eval_s = time.perf_counter() - t1
        row.report = evaluate(val.labels, predicted, scores,
                              model_tag=f"{entry.model} / {entry.settings}")
        row.confusion = row.report.confusion
        if model.info.get("converged") is False:
            notes.append("svm_not_converged")
    except Exception as exc:  # a failing row must not abort the suite
        log.exception("suite entry %s / %s failed", entry.model, entry.settings)
        row.train_s = time.perf_counter() - t0
        row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    row.notes = ";".join(notes)
    return row


def run_suite(train: EmbeddingDataset, val: EmbeddingDataset, suite="table1", seed: int = 0,
              svm_subsample: int | None = 8000, parallel: int = 1, entries=None,
              progress=None) -> list:
    """Train and evaluate each suite entry; rows come back in suite order."""
    entries = list(SUITES[suite] if entries is None else entries)
    if not entries:
        raise ValueError("suite has no entries")

    def job(entry):
        row = _run_entry(entry, train, val, seed, svm_subsample)
        if progress:
            progress(row)
        return row

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(job, entries))
    return [job(e) for e in entries]


def write_bench_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.csv_fields())


# -- ROC artifacts -----------------------------------------------------------------

def write_roc_csv(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["positive", "fpr", "tpr"])
        for curve in curves:
            name = curve.positive.name.lower()
            for fpr, tpr in curve.points:
                w.writerow([name, repr(float(fpr)), repr(float(tpr))])


def roc_svg(curves, title="ROC") -> str:
    """Side-by-side ROC panels as a standalone SVG document."""
    size, pad, gap = 300, 45, 30
    width = len(curves) * (size + pad + gap) + pad
    height = size + 2 * pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, curve in enumerate(curves):
        x0 = pad + i * (size + pad + gap)
        y0 = pad
        parts.append(f'<g transform="translate({x0},{y0})">')
        parts.append(f'<rect width="{size}" height="{size}" fill="none" stroke="black"/>')
        parts.append(f'<line x1="0" y1="{size}" x2="{size}" y2="0" stroke="#aaa" '
                     f'stroke-dasharray="4 3"/>')
        for k in range(6):
            v = k / 5
            parts.append(f'<text x="{v * size:.1f}" y="{size + 14}" text-anchor="middle">'
                         f'{v:.1f}</text>')
            parts.append(f'<text x="-6" y="{size - v * size + 4:.1f}" text-anchor="end">'
                         f'{v:.1f}</text>')
        pts = " ".join(f"{fpr * size:.2f},{size - tpr * size:.2f}" for fpr, tpr in curve.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
        name = curve.positive.name.lower()
        parts.append(f'<text x="{size / 2}" y="-10" text-anchor="middle">'
                     f'{title}: positive={name} (AUC={curve.auc:.4f})</text>')
        parts.append(f'<text x="{size / 2}" y="{size + 32}" text-anchor="middle">'
                     f'False Positive Rate</text>')
        parts.append(f'<text transform="translate(-32,{size / 2}) rotate(-90)" '
                     f'text-anchor="middle">True Positive Rate</text>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_roc_svg(curves, path, title="ROC") -> None:
    with open(path, "w") as fh:
        fh.write(roc_svg(curves, title))


def roc_pair(report: EvalReport):
    return [c for c in (report.roc_female, report.roc_male) if isinstance(c, RocCurve)]


"""CART trees grown best-first under a split budget, and tree/LDA ensembles."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .baselines import LdaModel, lda_fit
from .errors import ContractError, TrainingError
from .store import EmbeddingDataset, GenderLabel

BAGGING = "bagging"
ADABOOST = "adaboost"
RUSBOOST = "rusboost"
SUBSPACE = "subspace"
ENSEMBLE_KINDS = (BAGGING, ADABOOST, RUSBOOST, SUBSPACE)

_FEATURE_BLOCK = 64


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat array form. ``feature[i] == -1`` marks a leaf.

    A sample goes left when ``x[feature] <= threshold``. ``score`` is the
    Male weight fraction of the training samples that reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    score: np.ndarray
    max_splits: int
    dimension: int

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature >= 0))

    def leaf_scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise ContractError(f"dimension mismatch: tree {self.dimension}, input {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r, n, fi = rows[inner], node[inner], f[inner]
            go_left = X[r, fi] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
        return self.score[node]

    def predict(self, X) -> np.ndarray:
        return (self.leaf_scores(X) > 0.5).astype(np.uint8)


def _best_split(X, t, w, idx):
    """Best (gain, feature, threshold) over the samples ``idx``, or None."""
    Xn = X[idx]
    wm = w[idx] * t[idx]
    wf = w[idx] - wm
    M, Fw = wm.sum(), wf.sum()
    W = M + Fw
    if W <= 0 or M <= 0 or Fw <= 0 or len(idx) < 2:
        return None
    parent = M * Fw / W
    best = None
    for start in range(0, Xn.shape[1], _FEATURE_BLOCK):
        block = Xn[:, start:start + _FEATURE_BLOCK]
        order = np.argsort(block, axis=0, kind="stable")
        xs = np.take_along_axis(block, order, axis=0)
        cm = np.cumsum(wm[order], axis=0)[:-1]
        cf = np.cumsum(wf[order], axis=0)[:-1]
        wl = cm + cf
        wr = W - wl
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(wl > 0, cm * cf / wl, 0.0)
            right = np.where(wr > 0, (M - cm) * (Fw - cf) / wr, 0.0)
        gain = 2.0 * (parent - left - right)
        gain[xs[1:] <= xs[:-1]] = -np.inf
        # feature-major search so ties go to the lowest feature, then lowest cut
        flat = int(np.argmax(gain.T))
        j, p = divmod(flat, gain.shape[0])
        g = gain[p, j]
        if g > 0 and (best is None or g > best[0]):
            thr = 0.5 * (xs[p, j] + xs[p + 1, j])
            best = (float(g), start + j, float(thr))
    return best


def _grow(X, t, w, max_splits):
    if max_splits < 1:
        raise ContractError("max_splits must be >= 1")
    W = w.sum()
    if not W > 0:
        raise ContractError("sample weights sum to zero")
    feature, threshold, left, right, score = [], [], [], [], []

    def new_node(idx):
        ww = w[idx].sum()
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        score.append(float((w[idx] * t[idx]).sum() / ww) if ww > 0 else 0.0)
        return len(feature) - 1

    heap = []

    def push(node, idx):
        s = _best_split(X, t, w, idx)
        if s is not None:
            heapq.heappush(heap, (-s[0], node, s[1], s[2], idx))

    root_idx = np.flatnonzero(w > 0)
    push(new_node(root_idx), root_idx)
    splits = 0
    while heap and splits < max_splits:
        _, node, f, thr, idx = heapq.heappop(heap)
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        ln, rn = new_node(li), new_node(ri)
        feature[node], threshold[node] = f, thr
        left[node], right[node] = ln, rn
        splits += 1
        push(ln, li)
        push(rn, ri)
    return DecisionTree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(score, dtype=np.float64),
        max_splits,
        X.shape[1],
    )


def tree_train(data: EmbeddingDataset, weights=None, max_splits: int = 100) -> DecisionTree:
    """Weighted-Gini CART, expanding the leaf with the largest impurity decrease first.

    Growth stops at ``max_splits`` internal nodes or when no leaf can be
    improved. Candidate thresholds are midpoints of consecutive distinct values.
    """
    if len(data) == 0:
        raise ContractError("empty dataset")
    if weights is None:
        weights = np.full(len(data), 1.0 / len(data))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(data),):
        raise ContractError(f"{weights.size} weights for {len(data)} records")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ContractError("weights must be finite and nonnegative")
    return _grow(data.X(), data.labels.astype(np.float64), weights, max_splits)


# -- ensembles -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str
    learners: list            # (base model, weight, feature subset or None)
    seed: int
    dimension: int
    config: dict = field(default_factory=dict)
    weight_sums: list = field(default_factory=list)        # boosting diagnostics
    subsample_counts: list = field(default_factory=list)   # RUSBoost (female, male) per round

    @property
    def n_learners(self):
        return len(self.learners)


def _bootstrap_weights(rng, n):
    return np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64) / n


def bagging_train(data: EmbeddingDataset, n_learners: int = 30, max_splits: int | None = None,
                  seed: int = 0, bootstrap: bool = True) -> EnsembleModel:
    """Bootstrap-aggregated trees; ``max_splits=None`` allows n-1 splits.

    A bootstrap resample is represented by multiplicity weights on the
    original records, which grows the same tree as the duplicated sample.
    """
    if len(data) == 0:
        raise ContractError("empty dataset")
    if n_learners < 1:
        raise ContractError("n_learners must be >= 1")
    X, t = data.X(), data.labels.astype(np.float64)
    n = len(data)
    splits = max(1, n - 1) if max_splits is None else max_splits
    learners = []
    for i in range(n_learners):
        w = _bootstrap_weights(_rng.generator(seed, i), n) if bootstrap else np.full(n, 1.0 / n)
        learners.append((_grow(X, t, w, splits), 1.0, None))
    return EnsembleModel(BAGGING, learners, seed, data.dimension,
                         {"n_learners": n_learners, "max_splits": splits,
                          "bootstrap": bootstrap})


def _learner_weight(eps, learn_rate):
    eps = min(max(eps, 1e-10), 1 - 1e-10)
    return learn_rate * 0.5 * math.log((1.0 - eps) / eps)


def _boost(data, n_learners, max_splits, learn_rate, seed, undersample):
    if n_learners < 1:
        raise ContractError("n_learners must be >= 1")
    if learn_rate <= 0:
        raise ContractError("learn_rate must be positive")
    n_f, n_m = data.class_counts()
    if n_f == 0 or n_m == 0:
        raise TrainingError("boosting needs both classes present")
    X, t = data.X(), data.labels.astype(np.float64)
    y = 2.0 * t - 1.0
    n = len(data)
    w = np.full(n, 1.0 / n)
    learners, sums, counts = [], [], []
    female_idx = np.flatnonzero(t == 0)
    male_idx = np.flatnonzero(t == 1)
    for r in range(n_learners):
        if undersample:
            rng = _rng.generator(seed, r)
            minority, majority = ((female_idx, male_idx) if n_f <= n_m
                                  else (male_idx, female_idx))
            p = w[majority] / w[majority].sum()
            picked = rng.choice(majority, size=minority.size, replace=False, p=p)
            sub = np.zeros(n)
            sub[minority] = w[minority]
            sub[picked] = w[picked]
            counts.append((int(np.sum(t[sub > 0] == 0)), int(np.sum(t[sub > 0] == 1))))
            tree = _grow(X, t, sub / sub.sum(), max_splits)
        else:
            tree = _grow(X, t, w, max_splits)
        h = 2.0 * tree.predict(X) - 1.0
        eps = float(w[h != y].sum())
        if eps >= 0.5:
            if not learners:
                learners.append((tree, 1.0, None))
            break
        beta = _learner_weight(eps, learn_rate)
        learners.append((tree, beta, None))
        if eps == 0.0:
            break
        w = w * np.exp(-beta * y * h)
        w /= w.sum()
        sums.append(float(w.sum()))
    return learners, sums, counts


def adaboost_train(data: EmbeddingDataset, n_learners: int = 30, max_splits: int = 20,
                   learn_rate: float = 0.1, seed: int = 0) -> EnsembleModel:
    """Discrete AdaBoost over weighted trees with shrinkage ``learn_rate``."""
    learners, sums, _ = _boost(data, n_learners, max_splits, learn_rate, seed, False)
    return EnsembleModel(ADABOOST, learners, seed, data.dimension,
                         {"n_learners": n_learners, "max_splits": max_splits,
                          "learn_rate": learn_rate}, sums)


def rusboost_train(data: EmbeddingDataset, n_learners: int = 30, max_splits: int = 20,
                   learn_rate: float = 0.1, seed: int = 0) -> EnsembleModel:
    """AdaBoost where each round's tree sees a class-balanced random undersample.

    The majority class is drawn without replacement, proportionally to the
    current sample weights, down to the minority count. Reweighting uses the
    full training set.
    """
    learners, sums, counts = _boost(data, n_learners, max_splits, learn_rate, seed, True)
    return EnsembleModel(RUSBOOST, learners, seed, data.dimension,
                         {"n_learners": n_learners, "max_splits": max_splits,
                          "learn_rate": learn_rate}, sums, counts)


def subspace_discriminant_train(data: EmbeddingDataset, n_learners: int = 30,
                                subspace_dim: int | None = None,
                                seed: int = 0) -> EnsembleModel:
    d = data.dimension
    if subspace_dim is None:
        subspace_dim = max(1, d // 2)
    if not 1 <= subspace_dim <= d:
        raise ContractError(f"subspace_dim {subspace_dim} outside [1, {d}]")
    if n_learners < 1:
        raise ContractError("n_learners must be >= 1")
    X = data.X()
    learners = []
    for i in range(n_learners):
        feats = np.sort(_rng.generator(seed, i).choice(d, size=subspace_dim, replace=False))
        sub = EmbeddingDataset(X[:, feats], data.labels, data.source_tag, subspace_dim)
        learners.append((lda_fit(sub), 1.0, feats))
    return EnsembleModel(SUBSPACE, learners, seed, d,
                         {"n_learners": n_learners, "subspace_dim": subspace_dim})


def _margin(model: EnsembleModel, X):
    """(score in [0, 1], Male mask) for a batch of inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.dimension:
        raise ContractError(f"dimension mismatch: model {model.dimension}, input {X.shape[1]}")
    if model.kind == BAGGING:
        score = np.mean([tree.leaf_scores(X) for tree, _, _ in model.learners], axis=0)
        return score, score > 0.5
    if model.kind == SUBSPACE:
        odds = np.mean([lda.score(X[:, feats]) for lda, _, feats in model.learners], axis=0)
        return 0.5 * (1.0 + np.tanh(0.5 * odds)), odds > 0
    total = sum(beta for _, beta, _ in model.learners)
    male = np.zeros(X.shape[0])
    for tree, beta, _ in model.learners:
        male += beta * tree.predict(X)
    score = male / total
    return score, score > 0.5


def ensemble_scores(model: EnsembleModel, X) -> np.ndarray:
    """Score in [0, 1] that grows with the Male vote mass."""
    return _margin(model, X)[0]


def ensemble_predict_labels(model: EnsembleModel, X) -> np.ndarray:
    return _margin(model, X)[1].astype(np.uint8)


def ensemble_predict(model: EnsembleModel, x):
    """Label and score for one input; an even split goes to Female."""
    score, male = _margin(model, np.asarray(x, dtype=np.float64).ravel())
    return (GenderLabel.MALE if male[0] else GenderLabel.FEMALE), float(score[0])

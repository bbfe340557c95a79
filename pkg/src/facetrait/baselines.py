"""Logistic regression, linear discriminant, Gaussian naive Bayes and KNN."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateInputError, TrainingError
from .store import EmbeddingDataset, GenderLabel

log = logging.getLogger(__name__)

GNB_VAR_FLOOR = 1e-9
KNN_DIST_EPS = 1e-12
LDA_RIDGE = 1e-6


def _check_dim(expected, x):
    if x.shape[-1] != expected:
        raise ContractError(f"dimension mismatch: model {expected}, input {x.shape[-1]}")


def _require_both_classes(data, min_per_class=1, what="training"):
    n_f, n_m = data.class_counts()
    if min(n_f, n_m) < min_per_class:
        raise TrainingError(
            f"{what} needs >= {min_per_class} record(s) per class, "
            f"got {n_f} female / {n_m} male"
        )


# -- logistic regression ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float = 0.0
    loss_trace: tuple = ()

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _check_dim(self.weights.size, X)
        return X @ self.weights + self.bias

    def predict_proba(self, X):
        return _sigmoid(self.decision(X))

    def predict(self, X):
        return (self.decision(X) > 0).astype(np.uint8)


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logreg_objective(w, b, X, t, lam):
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * lam * (w @ w)
    r = _sigmoid(z) - t
    grad = np.empty(w.size + 1)
    grad[:-1] = X.T @ r / X.shape[0] + lam * w
    grad[-1] = r.mean()
    return float(loss), grad


def logreg_loss_grad(model: LogRegModel, data: EmbeddingDataset):
    """Mean cross-entropy plus ``lambda/2 * ||w||^2`` and its gradient.

    The gradient is returned as one vector: weights first, bias last.
    """
    if len(data) == 0:
        raise ContractError("empty dataset")
    X = data.X()
    _check_dim(model.weights.size, X)
    return _logreg_objective(np.asarray(model.weights, np.float64), float(model.bias),
                             X, data.labels.astype(np.float64), model.l2_lambda)


@dataclass(frozen=True)
class LogRegConfig:
    step: float = 1.0
    epochs: int = 2000
    grad_tol: float = 1e-6


def logreg_train(data: EmbeddingDataset, l2_lambda: float = 1e-4,
                 config: LogRegConfig = LogRegConfig()) -> LogRegModel:
    """Full-batch gradient descent from zeros with Armijo backtracking.

    The trial step grows by 2x after each accepted step, so badly scaled
    features do not pin the optimizer to a tiny step.
    """
    if l2_lambda < 0:
        raise ContractError("l2_lambda must be nonnegative")
    _require_both_classes(data)
    X = data.X()
    t = data.labels.astype(np.float64)
    w = np.zeros(X.shape[1])
    b = 0.0
    loss, g = _logreg_objective(w, b, X, t, l2_lambda)
    trace = [loss]
    step = config.step
    for _ in range(config.epochs):
        if np.max(np.abs(g)) <= config.grad_tol:
            break
        gg = g @ g
        while True:
            w_new = w - step * g[:-1]
            b_new = b - step * g[-1]
            new_loss, new_g = _logreg_objective(w_new, b_new, X, t, l2_lambda)
            if new_loss <= loss - 0.5 * step * gg or step < 1e-20:
                break
            step *= 0.5
        if not np.isfinite(new_loss):
            raise TrainingError("logistic regression diverged (non-finite loss)")
        w, b, loss, g = w_new, b_new, new_loss, new_g
        trace.append(loss)
        step *= 2.0
    return LogRegModel(w, float(b), l2_lambda, tuple(trace))


# -- linear discriminant ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LdaModel:
    class_means: np.ndarray      # (2, d): Female row 0, Male row 1
    cholesky: np.ndarray         # lower factor of the pooled covariance
    log_priors: np.ndarray       # (2,)
    weights: np.ndarray          # Sigma^-1 (mu1 - mu0)
    offset: float

    @property
    def dimension(self):
        return self.class_means.shape[1]

    def score(self, X):
        X = np.asarray(X, dtype=np.float64)
        _check_dim(self.dimension, X)
        return X @ self.weights + self.offset

    def predict(self, X):
        return (self.score(np.atleast_2d(X)) > 0).astype(np.uint8)


def lda_fit(data: EmbeddingDataset, priors=None) -> LdaModel:
    """Two-class LDA with a full pooled covariance.

    ``priors`` overrides the empirical class proportions (Female, Male).
    """
    _require_both_classes(data, 2, "LDA")
    X = data.X()
    n, d = X.shape
    female = data.labels == 0
    means = np.stack([X[female].mean(axis=0), X[~female].mean(axis=0)])
    centered = X - means[data.labels.astype(np.intp)]
    cov = centered.T @ centered / (n - 2)
    ridge = LDA_RIDGE * np.trace(cov) / d
    if ridge == 0.0:
        ridge = LDA_RIDGE
    cov[np.diag_indices(d)] += ridge
    L = np.linalg.cholesky(cov)
    if priors is None:
        n_f, n_m = data.class_counts()
        priors = (n_f / n, n_m / n)
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (2,) or np.any(priors <= 0) or abs(priors.sum() - 1) > 1e-12:
        raise ContractError(f"priors must be two positive reals summing to 1, got {priors}")
    log_priors = np.log(priors)
    diff = means[1] - means[0]
    w = _chol_solve(L, diff)
    offset = -0.5 * float((means[1] + means[0]) @ w) + log_priors[1] - log_priors[0]
    return LdaModel(means, L, log_priors, w, offset)


def _chol_solve(L, b):
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


def lda_score(model: LdaModel, x) -> float:
    """Log posterior odds, Male over Female."""
    return float(model.score(np.asarray(x, dtype=np.float64).ravel()))


# -- Gaussian naive Bayes -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class GnbModel:
    means: np.ndarray       # (2, d)
    variances: np.ndarray   # (2, d), floored
    log_priors: np.ndarray  # (2,)

    @property
    def dimension(self):
        return self.means.shape[1]

    def log_odds(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _check_dim(self.dimension, X)
        ll = []
        for c in (0, 1):
            v = self.variances[c]
            ll.append(-0.5 * np.sum(np.log(2 * np.pi * v) + (X - self.means[c]) ** 2 / v,
                                    axis=1) + self.log_priors[c])
        return ll[1] - ll[0]

    def posterior(self, X):
        """P(Male | x), normalized in log space."""
        lo = self.log_odds(X)
        return _sigmoid(lo)

    def predict(self, X):
        return (self.log_odds(X) > 0).astype(np.uint8)


def gnb_fit(data: EmbeddingDataset) -> GnbModel:
    _require_both_classes(data, 2, "naive Bayes")
    X = data.X()
    female = data.labels == 0
    means, variances = [], []
    for rows in (X[female], X[~female]):
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0, ddof=1), GNB_VAR_FLOOR))
    n_f, n_m = data.class_counts()
    log_priors = np.log(np.array([n_f, n_m], dtype=np.float64) / len(data))
    return GnbModel(np.stack(means), np.stack(variances), log_priors)


def gnb_posterior(model: GnbModel, x) -> float:
    return float(model.posterior(np.asarray(x, dtype=np.float64).ravel())[0])


# -- k nearest neighbours ----------------------------------------------------

EUCLIDEAN = "euclidean"
COSINE = "cosine"
UNIFORM = "uniform"
INVERSE_DISTANCE = "inverse"


@dataclass(frozen=True, eq=False)
class KnnModel:
    train: EmbeddingDataset
    k: int
    metric: str = EUCLIDEAN
    weighting: str = UNIFORM

    def __post_init__(self):
        if self.metric not in (EUCLIDEAN, COSINE):
            raise ContractError(f"unknown metric {self.metric!r}")
        if self.weighting not in (UNIFORM, INVERSE_DISTANCE):
            raise ContractError(f"unknown weighting {self.weighting!r}")
        if not 1 <= self.k <= len(self.train):
            raise ContractError(f"k={self.k} outside [1, {len(self.train)}]")

    @property
    def dimension(self):
        return self.train.dimension


def knn_fit(data: EmbeddingDataset, k: int, metric=EUCLIDEAN, weighting=UNIFORM) -> KnnModel:
    if len(data) == 0:
        raise TrainingError("KNN needs a nonempty training set")
    model = KnnModel(data, k, metric, weighting)
    if metric == COSINE:
        norms = np.linalg.norm(data.X(), axis=1)
        if np.any(norms == 0):
            i = int(np.argmax(norms == 0))
            raise DegenerateInputError(f"training record {i} has zero norm", index=i)
    return model


def _distances(model: KnnModel, Q: np.ndarray, T: np.ndarray, T_sq: np.ndarray):
    G = Q @ T.T
    if model.metric == EUCLIDEAN:
        q_sq = np.einsum("ij,ij->i", Q, Q)
        d2 = q_sq[:, None] + T_sq[None, :] - 2.0 * G
        np.maximum(d2, 0.0, out=d2)
        return np.sqrt(d2)
    q_norm = np.sqrt(np.einsum("ij,ij->i", Q, Q))
    if np.any(q_norm == 0):
        i = int(np.argmax(q_norm == 0))
        raise DegenerateInputError(f"query {i} has zero norm under cosine distance", index=i)
    return 1.0 - G / (q_norm[:, None] * np.sqrt(T_sq)[None, :])


def _nearest(dist_row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest distances; ties go to the earlier training record."""
    n = dist_row.size
    if k >= n:
        return np.argsort(dist_row, kind="stable")
    kth = np.partition(dist_row, k - 1)[k - 1]
    below = np.flatnonzero(dist_row < kth)
    at = np.flatnonzero(dist_row == kth)[: k - below.size]
    idx = np.concatenate([below, at])
    return idx[np.argsort(dist_row[idx], kind="stable")]


def knn_scores(model: KnnModel, X, chunk: int = 512) -> np.ndarray:
    """Male weight fraction among the k nearest neighbours of each query."""
    Q = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim(model.dimension, Q)
    T = model.train.X()
    T_sq = np.einsum("ij,ij->i", T, T)
    male = model.train.labels.astype(np.float64)
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], chunk):
        D = _distances(model, Q[s:s + chunk], T, T_sq)
        for r, row in enumerate(D):
            idx = _nearest(row, model.k)
            if model.weighting == UNIFORM:
                w = np.ones(idx.size)
            else:
                w = 1.0 / (row[idx] + KNN_DIST_EPS)
            out[s + r] = float(w @ male[idx]) / float(w.sum())
    return out


def knn_predict(model: KnnModel, x):
    """Label and Male-weight score for one query; a split vote goes to Female."""
    score = float(knn_scores(model, np.asarray(x, dtype=np.float64).ravel())[0])
    label = GenderLabel.MALE if score > 0.5 else GenderLabel.FEMALE
    return label, score

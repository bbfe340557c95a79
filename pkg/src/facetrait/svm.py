"""Kernel SVM trained by sequential minimal optimization.

The solver works on the dual

    max_a  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0

and keeps the bias-free error cache ``F_i = sum_j a_j y_j K_ij - y_i``.
Each step picks the pair with the largest error difference ``F_low - F_up``
among the feasible index sets (the maximal KKT violator), solves the
two-variable subproblem analytically and updates ``F`` from two kernel rows.
Training stops once that largest difference drops to ``tol``.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError, TrainingError
from .store import EmbeddingDataset, GenderLabel

log = logging.getLogger(__name__)

LINEAR = "linear"
POLYNOMIAL = "polynomial"
GAUSSIAN = "gaussian"
KERNEL_KINDS = (LINEAR, POLYNOMIAL, GAUSSIAN)


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    degree: int = 2
    scale: float | None = None  # sigma; None means sqrt(feature dimension)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        if self.kind == POLYNOMIAL and self.degree not in (2, 3):
            raise ContractError(f"polynomial degree must be 2 or 3, got {self.degree}")
        if self.scale is not None and not self.scale > 0:
            raise ContractError(f"kernel scale must be positive, got {self.scale}")

    @classmethod
    def gaussian(cls, scale=None):
        return cls(GAUSSIAN, scale=scale)

    @classmethod
    def quadratic(cls, scale=None):
        return cls(POLYNOMIAL, degree=2, scale=scale)

    @classmethod
    def cubic(cls, scale=None):
        return cls(POLYNOMIAL, degree=3, scale=scale)

    @classmethod
    def linear(cls, scale=None):
        return cls(LINEAR, scale=scale)

    @classmethod
    def from_name(cls, name: str, scale=None) -> "KernelSpec":
        try:
            return {"gaussian": cls.gaussian, "quadratic": cls.quadratic,
                    "cubic": cls.cubic, "linear": cls.linear}[name.lower()](scale)
        except KeyError:
            raise ContractError(f"unknown kernel {name!r}") from None

    @property
    def name(self) -> str:
        if self.kind == POLYNOMIAL:
            return "quadratic" if self.degree == 2 else "cubic"
        return self.kind

    def resolve(self, dim: int) -> "KernelSpec":
        """Pin the default scale to sqrt(dim)."""
        if self.scale is not None:
            return self
        return KernelSpec(self.kind, self.degree, math.sqrt(dim))

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "scale": self.scale}


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ContractError(f"dimension mismatch: {x.size} vs {y.size}")
    s2 = spec.resolve(x.size).scale ** 2
    if spec.kind == GAUSSIAN:
        diff = x - y
        return math.exp(-float(diff @ diff) / s2)
    dot = float(x @ y) / s2
    if spec.kind == LINEAR:
        return dot
    return (1.0 + dot) ** spec.degree


def kernel_matrix(spec: KernelSpec, X, Y, X_sq=None, Y_sq=None) -> np.ndarray:
    """Gram block ``K[i, j] = k(X[i], Y[j])`` for row-stacked inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise ContractError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    s2 = spec.resolve(X.shape[1]).scale ** 2
    G = X @ Y.T
    if spec.kind == GAUSSIAN:
        if X_sq is None:
            X_sq = np.einsum("ij,ij->i", X, X)
        if Y_sq is None:
            Y_sq = np.einsum("ij,ij->i", Y, Y)
        d2 = X_sq[:, None] + Y_sq[None, :] - 2.0 * G
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / s2)
    G /= s2
    if spec.kind == LINEAR:
        return G
    return (1.0 + G) ** spec.degree


@dataclass(frozen=True)
class SmoParams:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10  # one pass = n pair updates
    cache_bytes: int = 256 * 1024 * 1024
    seed: int = 0
    subsample: int | None = None

    def __post_init__(self):
        if not self.C > 0:
            raise ContractError("C must be positive")
        if not 0 < self.tol < 1:
            raise ContractError("tol must lie in (0, 1)")
        if self.max_passes < 1:
            raise ContractError("max_passes must be >= 1")
        if self.cache_bytes < 0:
            raise ContractError("cache_bytes must be nonnegative")


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    support_labels: np.ndarray  # +1 Male, -1 Female
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    converged: bool = True
    n_iter: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]


class _RowCache:
    """LRU cache of kernel rows ``K[i, :]`` over the training set."""

    def __init__(self, spec, X, cache_bytes):
        self.spec = spec
        self.X = X
        self.sq = np.einsum("ij,ij->i", X, X)
        self.capacity = max(2, cache_bytes // max(1, X.shape[0] * 8))
        self.rows = OrderedDict()

    def row(self, i):
        r = self.rows.get(i)
        if r is not None:
            self.rows.move_to_end(i)
            return r
        r = kernel_matrix(self.spec, self.X[i:i + 1], self.X,
                          self.sq[i:i + 1], self.sq)[0]
        if self.spec.kind == GAUSSIAN:
            r[i] = 1.0
        if not np.isfinite(r).all():
            j = int(np.argmax(~np.isfinite(r)))
            raise NumericError(f"non-finite kernel value at pair ({i}, {j})")
        self.rows[i] = r
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return r


def _dual_objective(alpha, y, F):
    # F + y = sum_j a_j y_j K_ij
    return float(alpha.sum() - 0.5 * np.dot(alpha * y, F + y))


def smo_solve(K_row, diag, y, C, tol, max_iter, trace=False):
    """Run SMO given a kernel-row accessor. Returns (alpha, bias, n_iter, converged, trace)."""
    n = y.size
    alpha = np.zeros(n)
    F = -y.copy()
    objective = [] if trace else None
    pos = y > 0
    snap = 1e-12 * C
    converged = False
    it = 0
    while it < max_iter:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        F_up = np.where(up, F, np.inf)
        F_low = np.where(low, F, -np.inf)
        i2 = int(np.argmin(F_up))
        i1 = int(np.argmax(F_low))
        gap = F_low[i1] - F_up[i2]
        if gap <= tol:
            converged = True
            break
        y1, y2 = y[i1], y[i2]
        a1, a2 = alpha[i1], alpha[i2]
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        r1, r2 = K_row(i1), K_row(i2)
        eta = diag[i1] + diag[i2] - 2.0 * r1[i2]
        # eta <= 0 (duplicate points, non-PD numerics): step to the bound in
        # the ascent direction, which still increases the objective
        eta = max(eta, 1e-12)
        a2_new = min(max(a2 + y2 * gap / eta, L), H)
        a1_new = a1 + y1 * y2 * (a2 - a2_new)
        # rounding can leave a multiplier a hair inside a bound, which would
        # keep it selectable with a zero-length step forever
        a1_new, a2_new = _snap(a1_new, C, snap), _snap(a2_new, C, snap)
        d1, d2 = a1_new - a1, a2_new - a2
        alpha[i1], alpha[i2] = a1_new, a2_new
        F += (y1 * d1) * r1 + (y2 * d2) * r2
        it += 1
        if trace:
            objective.append(_dual_objective(alpha, y, F))
    bias = _bias(alpha, y, F, C)
    return alpha, bias, it, converged, objective


def _snap(a, C, eps):
    if a < eps:
        return 0.0
    if a > C - eps:
        return C
    return a


def _bias(alpha, y, F, C):
    eps = 1e-12 * C
    free = (alpha > eps) & (alpha < C - eps)
    if free.any():
        Ff = F[free]
        return -0.5 * (Ff.max() + Ff.min())
    pos = y > 0
    up = (pos & (alpha < C)) | (~pos & (alpha > 0))
    low = (pos & (alpha > 0)) | (~pos & (alpha < C))
    b_up = F[up].min() if up.any() else 0.0
    b_low = F[low].max() if low.any() else 0.0
    return -0.5 * (b_up + b_low)


def smo_train(data: EmbeddingDataset, spec: KernelSpec, params: SmoParams = SmoParams(),
              trace: bool = False) -> SvmModel:
    """Fit a binary kernel SVM (Female -> -1, Male -> +1).

    With ``trace=True`` the dual objective after every pair update is kept in
    ``objective_trace``; it is nondecreasing.
    """
    if params.subsample is not None and len(data) > params.subsample:
        rng = np.random.default_rng(params.seed)
        keep = np.sort(rng.choice(len(data), params.subsample, replace=False))
        data = data.subset(keep)
    n_f, n_m = data.class_counts()
    if n_f == 0 or n_m == 0:
        raise TrainingError("SVM training needs both classes present")
    X = data.X()
    y = data.signed_labels()
    spec = spec.resolve(data.dimension)
    cache = _RowCache(spec, X, params.cache_bytes)
    if spec.kind == GAUSSIAN:
        diag = np.ones(len(X))
    else:
        diag = np.array([kernel_eval(spec, x, x) for x in X])
    if not np.isfinite(diag).all():
        i = int(np.argmax(~np.isfinite(diag)))
        raise NumericError(f"non-finite kernel value at pair ({i}, {i})")
    max_iter = params.max_passes * len(X)
    alpha, bias, it, converged, obj = smo_solve(cache.row, diag, y, params.C,
                                                params.tol, max_iter, trace)
    if not converged:
        log.warning("SMO stopped after %d updates without reaching tol=%g", it, params.tol)
    sv = alpha > 0
    return SvmModel(
        support_vectors=X[sv].copy(),
        support_labels=y[sv].copy(),
        alphas=alpha[sv].copy(),
        bias=float(bias),
        kernel=spec,
        C=params.C,
        converged=converged,
        n_iter=it,
        objective_trace=obj or [],
    )


def decision_function(model: SvmModel, X, chunk: int = 2048) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.dimension:
        raise ContractError(f"dimension mismatch: model {model.dimension}, input {X.shape[1]}")
    coef = model.alphas * model.support_labels
    sv_sq = np.einsum("ij,ij->i", model.support_vectors, model.support_vectors)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        K = kernel_matrix(model.kernel, X[s:s + chunk], model.support_vectors, Y_sq=sv_sq)
        out[s:s + chunk] = K @ coef + model.bias
    return out


def svm_decision(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != model.dimension:
        raise ContractError(f"dimension mismatch: model {model.dimension}, input {x.size}")
    spec, sv = model.kernel, model.support_vectors
    s2 = spec.scale ** 2
    if spec.kind == GAUSSIAN:
        diff = sv - x
        k = np.exp(-np.einsum("ij,ij->i", diff, diff) / s2)
    elif spec.kind == LINEAR:
        k = sv @ x / s2
    else:
        k = (1.0 + sv @ x / s2) ** spec.degree
    return float(k @ (model.alphas * model.support_labels) + model.bias)


def svm_predict(model: SvmModel, x) -> GenderLabel:
    # f == 0 resolves to Female
    return GenderLabel.MALE if svm_decision(model, x) > 0 else GenderLabel.FEMALE


def predict_labels(model: SvmModel, X) -> np.ndarray:
    return (decision_function(model, X) > 0).astype(np.uint8)


def dual_objective(model: SvmModel) -> float:
    """Dual objective of the retained multipliers (zeros contribute nothing)."""
    coef = model.alphas * model.support_labels
    K = kernel_matrix(model.kernel, model.support_vectors, model.support_vectors)
    return float(model.alphas.sum() - 0.5 * coef @ K @ coef)

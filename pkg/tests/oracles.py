"""Slow, independent reference implementations used as test oracles.

None of these share code with the package: kernels are evaluated pairwise from
their definitions, the dual QP is solved by accelerated projected gradient, and
AUC / KNN are computed by exhaustive counting.
"""

import math

import numpy as np


# -- kernels and the SVM dual --------------------------------------------------------

def kernel_direct(kind, x, y, scale, degree=2):
    s2 = scale * scale
    if kind == "gaussian":
        return math.exp(-sum((a - b) ** 2 for a, b in zip(x, y)) / s2)
    dot = sum(a * b for a, b in zip(x, y)) / s2
    if kind == "linear":
        return dot
    return (1.0 + dot) ** degree


def gram_direct(kind, X, scale, degree=2):
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = kernel_direct(kind, X[i], X[j], scale, degree)
    return K


def _project(v, y, ub):
    """Euclidean projection of each row of v onto {0 <= a <= ub, y.a = 0}.

    With a = clip(v - lam*y, 0, ub), every coordinate moves with unit slope in
    lam between its two breakpoints, so y.a = sum(ub over y=+1) - h(lam) where
    h(lam) = sum clip(lam - lo, 0, hi - lo). h is piecewise linear and
    nondecreasing; it is tabulated at the sorted breakpoints with cumulative
    sums and the root is found by linear interpolation, which is exact.
    """
    m, n = v.shape
    b1, b2 = y * v, y * (v - ub)
    lo, hi = np.minimum(b1, b2), np.maximum(b1, b2)
    target = np.sum(np.where(y > 0, ub, 0.0), axis=1)
    pts = np.concatenate([lo, hi], axis=1)
    inc = np.concatenate([np.ones((m, n)), -np.ones((m, n))], axis=1)
    order = np.argsort(pts, axis=1, kind="stable")
    pts = np.take_along_axis(pts, order, axis=1)
    slope = np.cumsum(np.take_along_axis(inc, order, axis=1), axis=1)
    h = np.zeros_like(pts)
    h[:, 1:] = np.cumsum(slope[:, :-1] * np.diff(pts, axis=1), axis=1)
    j = np.argmax(h >= target[:, None], axis=1)
    j = np.maximum(j, 1)
    rows = np.arange(m)
    h0, h1 = h[rows, j - 1], h[rows, j]
    l0, l1 = pts[rows, j - 1], pts[rows, j]
    span = h1 - h0
    t = np.where(span > 0, (target - h0) / np.where(span > 0, span, 1.0), 1.0)
    lam = l0 + t * (l1 - l0)
    return np.clip(v - lam[:, None] * y, 0.0, ub)


def dual_qp_oracle(Ks, ys, Cs, iters=20000):
    """Maximize sum(a) - a'Qa/2, Q = yy'*K, s.t. 0 <= a <= C, y'a = 0.

    ``Ks``/``ys`` are lists of per-problem arrays of varying size; problems are
    padded to a common size with variables pinned at zero and solved together
    by FISTA with gradient-based restart. Returns (alphas, objectives).
    """
    m = len(Ks)
    n = max(len(y) for y in ys)
    Q = np.zeros((m, n, n))
    Y = np.ones((m, n))
    UB = np.zeros((m, n))
    for p, (K, y, C) in enumerate(zip(Ks, ys, Cs)):
        k = len(y)
        Q[p, :k, :k] = np.outer(y, y) * K
        Y[p, :k] = y
        UB[p, :k] = C
    L = np.linalg.eigvalsh(Q)[:, -1]
    step = 1.0 / np.maximum(L, 1e-12)
    a = np.zeros((m, n))
    z = a.copy()
    t = np.ones(m)
    for it in range(iters):
        grad = np.einsum("pij,pj->pi", Q, z) - 1.0
        a_new = _project(z - step[:, None] * grad, Y, UB)
        restart = np.sum(grad * (a_new - a), axis=1) > 0
        t_new = np.where(restart, 1.0, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t)))
        mom = np.where(restart, 0.0, (t - 1.0) / t_new)
        z = a_new + mom[:, None] * (a_new - a)
        moved = np.max(np.abs(a_new - a))
        a, t = a_new, t_new
        if it > 100 and moved < 1e-15:
            break
    obj = a.sum(axis=1) - 0.5 * np.einsum("pi,pij,pj->p", a, Q, a)
    return [a[p, :len(y)] for p, y in enumerate(ys)], obj


def dual_value(alpha, y, K):
    c = alpha * y
    return float(alpha.sum() - 0.5 * c @ K @ c)


# -- AUC -------------------------------------------------------------------------

def mann_whitney_auc(pos_scores, neg_scores):
    """Fraction of (positive, negative) pairs ordered correctly, ties worth 1/2."""
    p = np.asarray(pos_scores, dtype=np.float64)[:, None]
    q = np.asarray(neg_scores, dtype=np.float64)[None, :]
    wins = 2 * int(np.sum(p > q)) + int(np.sum(p == q))
    return wins / (2.0 * p.size * q.size)


# -- KNN -------------------------------------------------------------------------

def knn_exhaustive(train_X, train_y, query, k, metric, weighting, eps=1e-12):
    """Label (0/1) by scanning every training point; ties between equal
    distances go to the earlier training record, an even vote goes to 0."""
    T = np.asarray(train_X, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if metric == "euclidean":
        d = np.sqrt(np.sum((T - q) ** 2, axis=1))
    else:
        d = 1.0 - (T @ q) / (np.sqrt(np.sum(T * T, axis=1)) * math.sqrt(float(q @ q)))
    ranked = sorted(zip(d.tolist(), range(len(d))))
    male = total = 0.0
    for dist, i in ranked[:k]:
        w = 1.0 if weighting == "uniform" else 1.0 / (dist + eps)
        total += w
        if train_y[i] == 1:
            male += w
    return 1 if male / total > 0.5 else 0


# -- finite differences ------------------------------------------------------------

def central_difference(f, theta, h=1e-5):
    theta = np.array(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def relative_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-300))

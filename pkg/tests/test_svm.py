import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facetrait.errors import ContractError, TrainingError
from facetrait.store import EmbeddingDataset, GenderLabel
from facetrait.svm import (KernelSpec, SmoParams, decision_function, dual_objective,
                           kernel_eval, kernel_matrix, predict_labels, smo_train, svm_decision,
                           svm_predict)
from oracles import dual_qp_oracle, dual_value, gram_direct, kernel_direct

ALL_KERNELS = ["gaussian", "quadratic", "cubic", "linear"]
TIGHT = SmoParams(C=1.0, tol=1e-10, max_passes=100000)


def two_point_model():
    data = EmbeddingDataset(np.array([[-1.0], [1.0]], np.float32), [0, 1])
    return smo_train(data, KernelSpec.linear(scale=1.0), SmoParams(C=10.0, tol=1e-12))


def blobs(n=200, seed=0, shift=2.0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    X = rng.standard_normal((n, 2))
    X[:, 0] += np.where(labels == 1, shift, -shift)
    return EmbeddingDataset(X.astype(np.float32), labels)


# -- kernels ------------------------------------------------------------------------

def test_gaussian_identity():
    x = np.array([0.3, -1.2, 4.0])
    assert kernel_eval(KernelSpec.gaussian(), x, x) == 1.0


def test_gaussian_unit_distance():
    assert kernel_eval(KernelSpec.gaussian(1.0), [0.0, 0.0], [1.0, 0.0]) == pytest.approx(
        0.367879, abs=1e-6)


def test_quadratic_value():
    assert kernel_eval(KernelSpec.quadratic(1.0), [1.0, 0.0], [1.0, 5.0]) == 4.0


def test_default_scale_is_sqrt_dim():
    x, y = np.ones(4), np.zeros(4)
    assert kernel_eval(KernelSpec.gaussian(), x, y) == pytest.approx(math.exp(-4 / 4))
    assert KernelSpec.linear().resolve(512).scale == pytest.approx(math.sqrt(512))


@pytest.mark.parametrize("name", ALL_KERNELS)
def test_kernel_matrix_matches_pairwise_definition(name):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((7, 3))
    spec = KernelSpec.from_name(name).resolve(3)
    kind = "linear" if name == "linear" else ("gaussian" if name == "gaussian" else "poly")
    ref = gram_direct(kind, X.tolist(), spec.scale, spec.degree)
    assert np.allclose(kernel_matrix(spec, X, X), ref, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.sampled_from(ALL_KERNELS))
def test_kernel_symmetric_and_gaussian_bounded(x, y, name):
    spec = KernelSpec.from_name(name)
    kxy, kyx = kernel_eval(spec, x, y), kernel_eval(spec, y, x)
    assert kxy == pytest.approx(kyx, rel=1e-12, abs=1e-12)
    if name == "gaussian":
        assert 0.0 <= kxy <= 1.0


def test_kernel_spec_validation():
    with pytest.raises(ContractError):
        KernelSpec("sigmoid")
    with pytest.raises(ContractError):
        KernelSpec("polynomial", degree=5)
    with pytest.raises(ContractError):
        KernelSpec.gaussian(scale=0.0)
    with pytest.raises(ContractError):
        kernel_eval(KernelSpec.linear(), [1, 2], [1, 2, 3])


# -- training ---------------------------------------------------------------------

def test_two_point_analytic_solution():
    m = two_point_model()
    assert np.allclose(m.alphas, [0.5, 0.5], atol=1e-9)
    assert m.bias == pytest.approx(0.0, abs=1e-9)
    for x in (-2.0, -0.3, 0.7, 3.0):
        assert svm_decision(m, [x]) == pytest.approx(x, abs=1e-9)


def test_two_point_predictions_and_tie():
    m = two_point_model()
    assert svm_decision(m, [0.5]) == pytest.approx(0.5)
    assert svm_predict(m, [0.5]) == GenderLabel.MALE
    assert svm_predict(m, [-0.5]) == GenderLabel.FEMALE
    assert svm_decision(m, [0.0]) == pytest.approx(0.0, abs=1e-12)
    tied = type(m)(m.support_vectors, m.support_labels, m.alphas, 0.0, m.kernel, m.C)
    assert svm_decision(tied, [0.0]) == 0.0
    assert svm_predict(tied, [0.0]) == GenderLabel.FEMALE


@pytest.mark.parametrize("name", ALL_KERNELS)
def test_blobs_training_accuracy(name):
    data = blobs()
    # the Bayes rule for this mixture is sign(x0); check the sample agrees
    bayes = np.mean((data.X()[:, 0] > 0) == data.labels)
    assert bayes >= 0.95
    m = smo_train(data, KernelSpec.from_name(name), SmoParams(C=1.0))
    assert m.converged
    acc = np.mean(predict_labels(m, data.X()) == data.labels)
    assert acc >= 0.97


@pytest.mark.parametrize("name", ALL_KERNELS)
def test_dual_objective_nondecreasing_and_feasible(name):
    m = smo_train(blobs(80, seed=2), KernelSpec.from_name(name), SmoParams(C=2.0), trace=True)
    tr = np.array(m.objective_trace)
    assert len(tr) == m.n_iter
    assert np.all(np.diff(tr) >= -1e-10)
    assert np.all((m.alphas > 0) & (m.alphas <= m.C))
    assert abs(np.dot(m.alphas, m.support_labels)) <= 1e-9
    assert tr[-1] == pytest.approx(dual_objective(m), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("name", ALL_KERNELS)
def test_kkt_at_free_support_vectors(name):
    data = blobs(60, seed=4, shift=1.0)
    m = smo_train(data, KernelSpec.from_name(name), TIGHT)
    assert m.converged
    free = m.alphas < m.C * (1 - 1e-9)
    f = decision_function(m, m.support_vectors[free])
    assert np.all(np.abs(m.support_labels[free] * f - 1.0) <= 1e-6)


def test_alphas_match_qp_oracle_gaussian():
    # the Gaussian Gram matrix is positive definite, so the multipliers are unique
    rng = np.random.default_rng(7)
    Ks, ys, Cs, models = [], [], [], []
    for _ in range(30):
        n, d = int(rng.integers(2, 21)), int(rng.integers(1, 5))
        labels = rng.permutation(np.arange(n) % 2)
        X = rng.standard_normal((n, d)).astype(np.float32)
        C = float(10 ** rng.uniform(-1, 1))
        data = EmbeddingDataset(X, labels)
        spec = KernelSpec.gaussian().resolve(d)
        m = smo_train(data, spec, SmoParams(C=C, tol=1e-10, max_passes=100000))
        Ks.append(gram_direct("gaussian", data.X().tolist(), spec.scale))
        ys.append(data.signed_labels())
        Cs.append(C)
        models.append((m, data))
    oracle_alpha, _ = dual_qp_oracle(Ks, ys, Cs, iters=10000)
    for (m, data), ref in zip(models, oracle_alpha):
        full = np.zeros(len(data))
        idx = [int(np.flatnonzero((data.X() == sv).all(axis=1))[0]) for sv in m.support_vectors]
        full[idx] = m.alphas
        assert np.max(np.abs(full - ref)) <= 1e-3


def test_translation_invariance_gaussian():
    data = blobs(60, seed=5)
    shifted = EmbeddingDataset(data.X() + 3.0, data.labels)
    spec = KernelSpec.gaussian(1.5)
    a = smo_train(data, spec, TIGHT)
    b = smo_train(shifted, spec, TIGHT)
    q = np.random.default_rng(0).standard_normal((20, 2))
    assert np.allclose(decision_function(a, q), decision_function(b, q + 3.0), atol=1e-5)


def test_record_order_does_not_change_decision():
    data = blobs(50, seed=6, shift=1.0)
    perm = np.random.default_rng(1).permutation(50)
    spec = KernelSpec.quadratic()
    a = smo_train(data, spec, TIGHT)
    b = smo_train(data.subset(perm), spec, TIGHT)
    q = np.random.default_rng(2).standard_normal((30, 2))
    assert np.allclose(decision_function(a, q), decision_function(b, q), atol=1e-5)


def test_decision_deterministic_and_batched_matches_single():
    m = smo_train(blobs(60), KernelSpec.cubic(), SmoParams())
    q = np.random.default_rng(3).standard_normal((5, 2))
    batch = decision_function(m, q)
    assert np.array_equal(batch, decision_function(m, q))
    single = np.array([svm_decision(m, x) for x in q])
    assert np.allclose(batch, single, atol=1e-10)


def test_duplicate_points_do_not_stall():
    X = np.array([[0.0], [0.0], [1.0], [1.0], [0.0]], np.float32)
    data = EmbeddingDataset(X, [0, 0, 1, 1, 1])
    m = smo_train(data, KernelSpec.linear(1.0), SmoParams(C=1.0))
    assert m.converged


def test_single_class_rejected():
    data = EmbeddingDataset(np.zeros((4, 2), np.float32), [1, 1, 1, 1])
    with pytest.raises(TrainingError):
        smo_train(data, KernelSpec.gaussian())


def test_subsample_is_seeded():
    data = blobs(300, seed=8)
    a = smo_train(data, KernelSpec.gaussian(), SmoParams(subsample=100, seed=3))
    b = smo_train(data, KernelSpec.gaussian(), SmoParams(subsample=100, seed=3))
    assert np.array_equal(a.alphas, b.alphas) and a.bias == b.bias
    assert len(a.alphas) <= 100


def test_dimension_mismatch():
    m = two_point_model()
    with pytest.raises(ContractError):
        svm_decision(m, [1.0, 2.0])


def test_oracle_dual_value_agrees_with_model_objective():
    data = blobs(30, seed=9)
    spec = KernelSpec.gaussian().resolve(2)
    m = smo_train(data, spec, TIGHT)
    K = gram_direct("gaussian", m.support_vectors.tolist(), spec.scale)
    assert dual_value(m.alphas, m.support_labels, K) == pytest.approx(dual_objective(m), rel=1e-10)
    assert kernel_direct("gaussian", [0, 0], [1, 0], 1.0) == pytest.approx(math.exp(-1))

import math

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from graphus import sgc
from graphus.csbm import CsbmParams, sample
from graphus.graph import normalized_adjacency


def training_problem(seed, n=40, d=5, K=3, scale=1.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(K, d)) * 2
    y = np.concatenate([np.arange(K), rng.integers(0, K, size=n - K)])
    X = centers[y] * scale + rng.normal(size=(n, d))
    return X, y


def sklearn_oracle(X, y, lam, balanced=True):
    clf = LogisticRegression(C=1.0 / lam, class_weight="balanced" if balanced else None,
                             tol=1e-12, max_iter=10000)
    return clf.fit(X, y)


def test_diffuse(path_graph):
    S = normalized_adjacency(path_graph).toarray()
    X = path_graph.features
    np.testing.assert_array_equal(sgc.diffuse(path_graph, 0), X)
    np.testing.assert_allclose(sgc.diffuse(path_graph, 2), S @ S @ X, atol=1e-15)
    with pytest.raises(ValueError):
        sgc.diffuse(path_graph, -1)


@pytest.mark.parametrize("balanced", [True, False])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_fit_matches_sklearn(balanced, lam):
    X, y = training_problem(1)
    cfg = sgc.SgcConfig(l2_weight=lam, class_balanced=balanced, solver_tolerance=1e-10)
    model = sgc.fit(X, np.arange(len(y)), y, 3, cfg)
    assert model.converged
    ref = sklearn_oracle(X, y, lam, balanced)
    np.testing.assert_allclose(sgc.predict_proba(model, X), ref.predict_proba(X), atol=1e-6)


def test_lbfgs_path_matches_sklearn():
    X, y = training_problem(2, n=120, d=300, K=6)
    cfg = sgc.SgcConfig(max_solver_iterations=5000)
    assert (X.shape[1] + 1) * 6 > sgc.NEWTON_MAX_PARAMS
    model = sgc.fit(X, np.arange(len(y)), y, 6, cfg)
    assert model.converged
    ref = sklearn_oracle(X, y, 1.0)
    np.testing.assert_allclose(sgc.predict_proba(model, X), ref.predict_proba(X), atol=1e-5)


def test_gradient_matches_finite_differences():
    X, y = training_problem(3)
    cfg = sgc.SgcConfig()
    idx = np.arange(len(y))
    model = sgc.fit(X, idx, y, 3, cfg)
    f, grad = sgc.objective(model, X, idx, y, cfg)
    theta = np.vstack([model.weights, model.bias[None, :]]).ravel()
    d, K = X.shape[1], 3
    h = 1e-5
    fd = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        def value(t):
            m = sgc.SgcModel(t.reshape(d + 1, K)[:d], t.reshape(d + 1, K)[d], model.present, True, 0)
            return sgc.objective(m, X, idx, y, cfg)[0]
        fd[k] = (value(theta + e) - value(theta - e)) / (2 * h)
    assert np.abs(fd - grad).max() < 1e-4
    assert np.linalg.norm(grad) <= cfg.solver_tolerance


def test_separable_data_is_fit_perfectly():
    X, y = training_problem(4, scale=6.0)
    model = sgc.fit(X, np.arange(len(y)), y, 3)
    assert np.mean(np.argmax(sgc.predict_proba(model, X), axis=1) == y) == 1.0


def test_refit_is_bitwise_identical():
    X, y = training_problem(5)
    a = sgc.fit(X, np.arange(len(y)), y, 3)
    b = sgc.fit(X, np.arange(len(y)), y, 3)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias.tobytes() == b.bias.tobytes()


def test_absent_classes_get_zero_probability():
    X, y = training_problem(6, K=3)
    keep = y != 1
    model = sgc.fit(X, np.flatnonzero(keep), y[keep], 3)
    proba = sgc.predict_proba(model, X)
    assert np.all(proba[:, 1] == 0.0)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_array_equal(model.present, [True, False, True])
    # equals the two-class fit
    remap = np.where(y[keep] == 2, 1, 0)
    two = sgc.fit(X, np.flatnonzero(keep), remap, 2)
    np.testing.assert_allclose(proba[:, [0, 2]], sgc.predict_proba(two, X), atol=1e-10)


def test_single_class_training():
    X = np.random.default_rng(0).normal(size=(5, 2))
    model = sgc.fit(X, [0, 1], [2, 2], 3)
    np.testing.assert_array_equal(sgc.predict_proba(model, X), np.tile([0.0, 0.0, 1.0], (5, 1)))


def test_fit_argument_checks():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        sgc.fit(X, [], [], 2)
    with pytest.raises(ValueError):
        sgc.fit(X, [0, 1], [0], 2)
    with pytest.raises(ValueError):
        sgc.SgcConfig(energy_temperature=0)


def test_energy_score():
    model = sgc.SgcModel(np.zeros((1, 2)), np.zeros(2), np.array([True, True]), True, 0)
    np.testing.assert_allclose(sgc.energy_score(model, np.zeros((1, 1)), 0), -math.log(2))
    model = sgc.SgcModel(np.zeros((1, 3)), np.array([1.0, 2.0, 3.0]), np.array([True, True, True]), True, 0)
    expected = -2.0 * math.log(math.exp(1) + math.exp(2) + math.exp(3))
    np.testing.assert_allclose(sgc.energy_score(model, np.zeros((4, 1)), temperature=2.0), expected)


def test_end_to_end_on_a_csbm():
    p = CsbmParams.homogeneous(200, 3, 6.0, 5.0, 3.0)
    g = sample(p, 0)
    Z = sgc.diffuse(g, 2)
    train = np.arange(0, 200, 4)
    model = sgc.fit(Z, train, g.labels[train], 3)
    acc = np.mean(np.argmax(sgc.predict_proba(model, Z), axis=1) == g.labels)
    assert acc > 0.8

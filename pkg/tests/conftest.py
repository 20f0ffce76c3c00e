import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from graphus.csbm import CsbmParams, build_class_means, sample
from graphus.exact import LabelState
from graphus.graph import Graph


def brute_log_joint(params, g, y, mode="correct"):
    """log p(A, X, y) by looping over every node and every unordered pair."""
    A = g.dense_adjacency()
    F = params.affiliation
    cov = params.sigma_x**2 * np.eye(params.feature_dim)
    total = 0.0
    for i in range(g.n):
        total += math.log(params.prior[y[i]])
        total += multivariate_normal.logpdf(g.features[i], params.class_means[y[i]], cov)
        for j in range(i + 1, g.n):
            f = F[y[i], y[j]]
            if A[i, j]:
                total += math.log(f)
            elif mode == "correct":
                total += math.log1p(-f)
    return total


def brute_posterior(params, g, state, mode="correct"):
    """(free nodes, all assignments, log p(y_U | A, X, y_O) for each) by enumeration."""
    free = state.unobserved
    y = state.labels.copy()
    assignments = list(itertools.product(range(params.num_classes), repeat=len(free)))
    scores = []
    for a in assignments:
        y[free] = a
        scores.append(brute_log_joint(params, g, y, mode))
    scores = np.array(scores)
    return free, np.array(assignments).reshape(len(assignments), len(free)), scores - logsumexp(scores)


def brute_marginals(params, g, state, mode="correct"):
    free, assignments, logp = brute_posterior(params, g, state, mode)
    out = np.zeros((len(free), params.num_classes))
    p = np.exp(logp)
    for k in range(len(free)):
        for c in range(params.num_classes):
            out[k, c] = p[assignments[:, k] == c].sum()
    return out


def random_params(rng, n, C, d=None):
    F = rng.uniform(0.1, 0.9, size=(C, C))
    F = np.triu(F) + np.triu(F, 1).T
    prior = rng.dirichlet(np.ones(C))
    d = C if d is None else d
    means = build_class_means(C, d, float(rng.uniform(0.5, 2.0)), seed=int(rng.integers(1000)))
    return CsbmParams(n, prior, F, means, float(rng.uniform(0.6, 1.4)))


@pytest.fixture
def small_instance():
    """6-node, 3-class CSBM with two observed nodes."""
    rng = np.random.default_rng(7)
    params = random_params(rng, 6, 3)
    g = sample(params, 11)
    state = LabelState.from_observed(g.labels, [0, 3], 3)
    return params, g, state


@pytest.fixture
def path_graph():
    """0 - 1 - 2 - 3 with 2-d features and two classes."""
    X = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [0.0, 2.0]])
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)], X, [0, 0, 1, 1], 2)

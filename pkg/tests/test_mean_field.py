import numpy as np
import pytest
from scipy.special import logsumexp

from conftest import brute_log_joint, brute_posterior, random_params
from graphus.csbm import CsbmParams, log_joint, sample
from graphus.exact import ExactPosterior, LabelState, node_potentials
from graphus.mean_field import MeanFieldConfig, approximation_error, elbo, mean_field_marginals


def fixed_point_residual(params, g, state, gamma, mode="correct"):
    unary, L1, L0 = node_potentials(params, g, mode)
    nb = np.asarray(g.adjacency @ gamma)
    rest = gamma.sum(axis=0)[None, :] - gamma - nb
    logits = unary + nb @ L1.T + rest @ L0.T
    target = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    free = state.unobserved
    return np.abs(target[free] - gamma[free]).max()


@pytest.fixture
def medium():
    p = CsbmParams.homogeneous(60, 3, 4.0, 2.0, 1.0)
    g = sample(p, 2)
    return p, g, LabelState.from_observed(g.labels, [0, 5, 9], 3)


def test_config_validation():
    with pytest.raises(ValueError):
        MeanFieldConfig(tolerance=0)
    with pytest.raises(ValueError):
        MeanFieldConfig(damping=1.0)
    with pytest.raises(ValueError):
        MeanFieldConfig(update_schedule="async")
    with pytest.raises(ValueError):
        MeanFieldConfig(init="random")


@pytest.mark.parametrize("schedule", ["sequential", "parallel"])
def test_converges_to_a_fixed_point(medium, schedule):
    p, g, state = medium
    res = mean_field_marginals(p, g, state, MeanFieldConfig(update_schedule=schedule, tolerance=1e-10,
                                                             max_iterations=2000))
    assert res.converged
    assert fixed_point_residual(p, g, state, res.gamma) < 1e-8
    np.testing.assert_allclose(res.gamma.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(res.gamma[state.observed], state.one_hot()[state.observed])


def test_sequential_elbo_never_decreases(medium):
    p, g, state = medium
    for init in ("uniform", "feature_likelihood"):
        res = mean_field_marginals(p, g, state, MeanFieldConfig(init=init), trace=True)
        assert np.all(np.diff(res.elbo_trace) >= -1e-9)
        assert len(res.elbo_trace) == res.iterations + 1


def test_elbo_at_one_hot_equals_log_joint(small_instance):
    params, g, state = small_instance
    y = g.labels
    gamma = np.eye(3)[y]
    np.testing.assert_allclose(elbo(params, g, state, gamma), log_joint(params, g, y), rtol=1e-12)


def test_elbo_lower_bounds_evidence(small_instance):
    params, g, state = small_instance
    free, assignments, _ = brute_posterior(params, g, state)
    y = state.labels.copy()
    joint = []
    for a in assignments:
        y[free] = a
        joint.append(brute_log_joint(params, g, y))
    log_evidence = logsumexp(joint)
    res = mean_field_marginals(params, g, state)
    assert elbo(params, g, state, res.gamma) <= log_evidence + 1e-9


def test_exact_when_posterior_factorizes():
    # misspecified mode on an edgeless graph leaves only per-node terms
    rng = np.random.default_rng(0)
    params = random_params(rng, 7, 3)
    g = sample(params.__class__(7, params.prior, np.full((3, 3), 1e-9), params.class_means, params.sigma_x), 0)
    assert g.adjacency.nnz == 0
    state = LabelState.from_observed(g.labels, [1], 3)
    res = mean_field_marginals(params, g, state, mode="misspecified")
    err = approximation_error(params, g, state, res.gamma, mode="misspecified")
    assert err["max"] < 1e-12


def test_approximation_error_summary(medium):
    p = CsbmParams.homogeneous(9, 2, 3.0, 2.0, 1.0)
    g = sample(p, 1)
    state = LabelState.from_observed(g.labels, [0], 2)
    gamma = mean_field_marginals(p, g, state).gamma
    err = approximation_error(p, g, state, gamma)
    exact = ExactPosterior(p, g, state).marginals()
    diff = np.abs(gamma[state.unobserved] - exact).ravel()
    assert err["median"] == np.median(diff) and err["max"] == diff.max()
    assert err["errors"].shape == (2 * len(state.unobserved),)


def test_no_unobserved_nodes(small_instance):
    params, g, _ = small_instance
    state = LabelState.from_observed(g.labels, range(g.n), 3)
    res = mean_field_marginals(params, g, state)
    assert res.converged and res.iterations == 0


def test_reports_non_convergence(medium):
    p, g, state = medium
    res = mean_field_marginals(p, g, state, MeanFieldConfig(max_iterations=1, tolerance=1e-15))
    assert not res.converged and res.iterations == 1

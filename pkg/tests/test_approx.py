import numpy as np
import pytest

from graphus import approx, sgc
from graphus.csbm import CsbmParams, sample
from graphus.exact import LabelState
from graphus.graph import Graph


@pytest.fixture
def instance():
    p = CsbmParams.homogeneous(10, 3, 3.0, 2.0, 1.5, means_seed=1)
    g = sample(p, 4)
    obs = [int(np.flatnonzero(g.labels == c)[0]) for c in range(3)]
    return g, LabelState.from_observed(g.labels, obs, 3)


def test_pseudo_labels_keep_revealed_labels(instance):
    g, state = instance
    Z = sgc.diffuse(g, 2)
    model = approx.base_model(Z, state, sgc.SgcConfig())
    pl = approx.pseudo_labels(model, Z, state)
    obs = state.observed
    np.testing.assert_array_equal(pl.labels[obs], state.labels[obs])
    free = state.unobserved
    np.testing.assert_array_equal(pl.labels[free], np.argmax(sgc.predict_proba(model, Z[free]), axis=1))


def test_mp_training_sets(instance):
    g, state = instance
    seen = {}
    approx.mp_scores(g, state, on_fit=lambda i, idx, lab: seen.setdefault(i, (idx.copy(), lab.copy())))
    assert sorted(seen) == state.unobserved.tolist()
    for i, (idx, lab) in seen.items():
        assert i not in idx and len(idx) == g.n - 1
        np.testing.assert_array_equal(lab[np.isin(idx, state.observed)], state.labels[state.observed])


def test_esp_training_sets(instance):
    g, state = instance
    seen = []
    approx.esp_scores(g, state, candidates=[state.unobserved[0]], on_fit=lambda i, idx, lab: seen.append((i, idx, lab)))
    assert len(seen) <= 3
    for i, idx, lab in seen:
        np.testing.assert_array_equal(idx[:-1], state.observed)
        assert idx[-1] == i
    assert sorted(lab[-1] for _, _, lab in seen) == list(range(len(seen)))


def test_esp_single_unobserved_node_reduces_to_base_confidence(instance):
    g, state = instance
    i = int(state.unobserved[0])
    full = LabelState.from_observed(g.labels, [j for j in range(g.n) if j != i], 3)
    Z = sgc.diffuse(g, 2)
    model = approx.base_model(Z, full, sgc.SgcConfig())
    f = sgc.predict_proba(model, Z[[i]])[0]
    log_score = approx.esp_scores(g, full, return_log=True)[0]
    np.testing.assert_allclose(log_score, np.log(f.max()), atol=1e-12)


def test_scores_do_not_read_hidden_labels(instance):
    g, state = instance
    scrambled = Graph(g.adjacency, g.features, np.roll(g.labels, 3), g.num_classes)
    for fn in (approx.mp_scores, approx.esp_scores):
        np.testing.assert_array_equal(fn(g, state), fn(scrambled, state))


def test_thread_pool_gives_identical_scores(instance):
    g, state = instance
    for fn in (approx.mp_scores, approx.esp_scores):
        np.testing.assert_array_equal(fn(g, state), fn(g, state, n_jobs=3))


def test_failed_fit_scores_minus_infinity(instance, monkeypatch, caplog):
    g, state = instance
    Z = sgc.diffuse(g, 2)
    model = approx.base_model(Z, state, sgc.SgcConfig())
    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")
    monkeypatch.setattr(sgc, "fit", broken)
    scores = approx.mp_scores(g, state, diffused=Z, model=model)
    assert np.all(scores == -np.inf)
    assert "failed" in caplog.text


def test_candidates_must_be_unobserved(instance):
    g, state = instance
    with pytest.raises(ValueError):
        approx.mp_scores(g, state, candidates=state.observed[:1])

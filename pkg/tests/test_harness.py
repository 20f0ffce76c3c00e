import numpy as np
import pytest

from graphus import acquisition, harness
from graphus.acquisition import Strategy
from graphus.csbm import CsbmParams, sample
from graphus.errors import ConfigError
from graphus.graph import Graph, save_dataset
from graphus.harness import (
    CsbmSource,
    DatasetSource,
    ExperimentConfig,
    RunRecord,
    StepRow,
    aggregate,
    curves_csv,
    init_labels,
    normalized_auc,
    read_curves,
    run_al,
    run_experiment,
    split_test,
)

PARAMS = CsbmParams.homogeneous(40, 3, 4.0, 2.0, 1.0)


def config(strategies=("random",), seeds=((0, 0),), **kw):
    return ExperimentConfig(CsbmSource(PARAMS), [Strategy(s) if isinstance(s, str) else s for s in strategies],
                            seeds, **kw)


def record(accs, name="s", seeds=(0, 0)):
    return RunRecord(name, seeds[0], seeds[1], tuple(StepRow(k, -1, 3 + k, a) for k, a in enumerate(accs)))


def test_split_sizes_and_determinism():
    g = sample(CsbmParams.homogeneous(10, 2, 2.0, 2.0, 1.0), 0)
    test, pool = split_test(g, 3, 0.2)
    assert len(test) == 2 and len(pool) == 8
    assert not set(test) & set(pool)
    t2, p2 = split_test(g, 3, 0.2)
    np.testing.assert_array_equal(test, t2)
    np.testing.assert_array_equal(pool, p2)
    with pytest.raises(ValueError):
        split_test(g, 0, 1.0)


def test_split_warns_when_a_class_is_only_in_test():
    g = Graph.from_edges(5, [], np.zeros((5, 1)), [0, 0, 0, 0, 1], 2)
    with pytest.warns(UserWarning, match="no node outside the test set"):
        for seed in range(50):
            test, _ = split_test(g, seed, 0.2)
            if 4 in test:
                break


def test_init_labels_one_per_class():
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
    pool = np.arange(9)
    state = init_labels(pool, labels, 4)
    assert len(state.observed) == 3
    assert sorted(state.labels[state.observed]) == [0, 1, 2]
    np.testing.assert_array_equal(init_labels(pool, labels, 4).labels, state.labels)


def test_init_labels_names_missing_class():
    with pytest.raises(ValueError, match="class 2"):
        init_labels([0, 1], [0, 1, 2], 0, 3)


def test_normalized_auc_examples():
    assert normalized_auc([0.7] * 6) == pytest.approx(0.7)
    assert normalized_auc([0.0, 1.0]) == 0.5
    assert normalized_auc([0.4]) == 0.4
    acc = np.array([0.1, 0.3, 0.35, 0.6, 0.9])
    assert acc.min() <= normalized_auc(acc) <= acc.max()
    # trapezoid over unit steps divided by the budget
    assert normalized_auc(acc) == pytest.approx((0.05 + 0.3 + 0.35 + 0.6 + 0.45) / 4)
    with pytest.raises(ValueError):
        normalized_auc([])


def test_aggregate_examples():
    single = aggregate([record([0.2, 0.4])])
    assert single["s"]["auc"]["std"] == 0.0 and single["s"]["runs"] == 1
    two = aggregate([record([0.2, 0.4], seeds=(0, 0)), record([0.2, 0.4], seeds=(0, 1))])
    assert two["s"]["auc"]["mean"] == pytest.approx(0.3)
    paired = aggregate([record([0.2, 0.4]), record([0.5, 0.5], name="b")], baseline="s")
    assert paired["s"]["paired_vs_baseline"]["auc"] == {"mean": 0.0, "std": 0.0}
    assert paired["b"]["paired_vs_baseline"]["auc"]["mean"] == pytest.approx(0.2)
    assert paired["b"]["final_accuracy"]["mean"] == 0.5


def test_config_validation():
    with pytest.raises(ConfigError, match="budget"):
        config(budget=0)
    with pytest.raises(ConfigError, match="test_fraction"):
        config(test_fraction=1.0)
    with pytest.raises(ConfigError, match="baseline"):
        config(strategies=("degree",))
    with pytest.raises(ConfigError, match="unique"):
        config(strategies=("random", "random"))
    with pytest.raises(ConfigError, match="csbm source"):
        ExperimentConfig(DatasetSource("x"), [Strategy("random"), Strategy("gt_total")], [(0, 0)])
    assert config().resolved_budget(3) == 15
    assert config(budget=12).resolved_budget(3) == 12


@pytest.mark.parametrize("kind", ["random", "gt_epistemic", "coreset_features", "energy"])
def test_run_record_structure(kind):
    cfg = config(strategies=("random", kind) if kind != "random" else ("random",), budget=6)
    strategy = cfg.strategies[-1]
    rec = run_al(cfg, strategy, (1, 2))
    assert len(rec.rows) == 7
    assert [r.n_labeled for r in rec.rows] == list(range(3, 10))
    queried = [r.queried for r in rec.rows[1:]]
    assert rec.rows[0].queried == -1 and len(set(queried)) == 6
    g = sample(PARAMS, [1, 0])
    test, _ = split_test(g, [1, 1], 0.2)
    assert not set(queried) & set(test.tolist())
    assert rec.auc == normalized_auc(rec.accuracies)


def test_run_is_bitwise_reproducible():
    cfg = config(budget=5)
    assert run_al(cfg, cfg.strategies[0], (0, 3)) == run_al(cfg, cfg.strategies[0], (0, 3))


def test_strategies_share_initial_labels_and_split():
    cfg = config(strategies=("random", "degree"), budget=3, evaluator="sgc")
    a = run_al(cfg, cfg.strategies[0], (2, 2))
    b = run_al(cfg, cfg.strategies[1], (2, 2))
    assert a.rows[0] == b.rows[0]


def test_evaluator_choice():
    cfg = config(strategies=("random", "gt_total"), budget=2)
    assert cfg.evaluator_for(cfg.strategies[0]) == "sgc"
    assert cfg.evaluator_for(cfg.strategies[1]) == "bayes"
    cfg = config(strategies=("random",), budget=2, evaluator="bayes")
    assert cfg.evaluator_for(cfg.strategies[0]) == "bayes"


def test_test_nodes_never_train_the_classifier(monkeypatch):
    cfg = config(strategies=("random", "coreset_ppr"), budget=5, evaluator="sgc")
    g = sample(PARAMS, [0, 0])
    test, _ = split_test(g, [0, 1], 0.2)
    seen = []
    real_fit = harness.sgc.fit
    monkeypatch.setattr(harness.sgc, "fit", lambda Z, idx, *a, **k: seen.append(np.array(idx)) or real_fit(Z, idx, *a, **k))
    run_al(cfg, cfg.strategies[1], (0, 0))
    assert len(seen) == 6
    for idx in seen:
        assert not set(idx.tolist()) & set(test.tolist())


def test_budget_larger_than_pool():
    with pytest.raises(ConfigError, match="exceeds"):
        cfg = config(budget=40)
        run_al(cfg, cfg.strategies[0], (0, 0))


def test_strategy_failure_is_reported_with_context(monkeypatch):
    cfg = config(strategies=("random", "degree"), seeds=((0, 0), (1, 0)), budget=3)

    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(acquisition, "degree_centrality", boom)
    with pytest.raises(harness.RunError, match=r"degree \(split_seed=0, run_seed=0\) failed at step 0: boom"):
        run_al(cfg, cfg.strategies[1], (0, 0))
    records, failures = run_experiment(cfg)
    assert len(records) == 2 and len(failures) == 2
    assert failures[0]["strategy"] == "degree" and "boom" in failures[0]["error"]


def test_parallel_and_serial_runs_match():
    cfg = config(strategies=("random", "degree", "gt_epistemic"), seeds=((0, 0), (0, 1), (1, 0)), budget=4)
    serial, _ = run_experiment(cfg, jobs=1)
    parallel, _ = run_experiment(cfg, jobs=3)
    assert serial == parallel
    assert [r.strategy for r in serial] == ["random"] * 3 + ["degree"] * 3 + ["gt_epistemic"] * 3


def test_curves_round_trip(tmp_path):
    cfg = config(strategies=("random", "ppr"), seeds=((0, 0), (1, 1)), budget=3)
    records, _ = run_experiment(cfg)
    path = tmp_path / "curves.csv"
    path.write_text(curves_csv(records))
    assert path.read_text().splitlines()[0] == "strategy,split_seed,run_seed,step,n_labeled,test_accuracy"
    back = read_curves(path)
    assert [r.auc for r in back] == [r.auc for r in records]
    assert aggregate(back, "random") == aggregate(records, "random")


def test_dataset_source(tmp_path):
    g = sample(PARAMS, 9)
    save_dataset(g, tmp_path / "ds")
    cfg = ExperimentConfig(DatasetSource(str(tmp_path / "ds")), [Strategy("random"), Strategy("esp")],
                           [(0, 0)], budget=3)
    records, failures = run_experiment(cfg)
    assert not failures and len(records) == 2 and all(len(r.rows) == 4 for r in records)

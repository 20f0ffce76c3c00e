"""Pool-based active-learning loop, splits, metrics and multi-seed aggregation."""
from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from graphus import sgc
from graphus.acquisition import AcquisitionContext, Strategy, bayes_marginals, next_query
from graphus.csbm import CsbmParams, sample
from graphus.errors import ConfigError, GraphusError
from graphus.exact import DEFAULT_MAX_TERMS, LabelState
from graphus.graph import Graph, load_dataset
from graphus.mean_field import MeanFieldConfig

__all__ = [
    "FORMAT_VERSION",
    "CsbmSource",
    "DatasetSource",
    "ExperimentConfig",
    "StepRow",
    "RunRecord",
    "RunError",
    "split_test",
    "init_labels",
    "run_al",
    "run_experiment",
    "normalized_auc",
    "aggregate",
    "curves_csv",
    "read_curves",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
EVALUATORS = ("auto", "bayes", "sgc")
CURVE_COLUMNS = ("strategy", "split_seed", "run_seed", "step", "n_labeled", "test_accuracy")


class RunError(GraphusError):
    """A strategy or classifier failure, annotated with where in the run it happened."""


@dataclass(frozen=True)
class CsbmSource:
    """Graphs are sampled from ``params``, one per split seed."""

    params: CsbmParams


@dataclass(frozen=True)
class DatasetSource:
    path: str
    normalize: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: every strategy is run on every (split_seed, run_seed) pair.

    ``evaluator`` picks the classifier whose test accuracy is recorded:
    ``bayes`` decodes the CSBM posterior marginals, ``sgc`` trains the SGC
    classifier, ``auto`` uses ``bayes`` for ground-truth strategies on CSBM
    sources and ``sgc`` otherwise. ``inference`` is the posterior
    approximation used by the Bayesian decoder for non-ground-truth
    strategies; ground-truth strategies use their own. By default every run
    is decoded with the correct likelihood, so the misspecified strategy
    differs only in what it queries; ``misspecified_decoder`` decodes it with
    the misspecified likelihood instead.
    """

    source: CsbmSource | DatasetSource
    strategies: tuple
    seeds: tuple
    budget: int | None = None
    test_fraction: float = 0.2
    evaluator: str = "auto"
    inference: str = "auto"
    misspecified_decoder: bool = False
    baseline: str = "random"
    classifier: sgc.SgcConfig = field(default_factory=sgc.SgcConfig)
    mean_field: MeanFieldConfig = field(default_factory=MeanFieldConfig)
    max_terms: int = DEFAULT_MAX_TERMS

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "seeds", tuple((int(a), int(b)) for a, b in self.seeds))
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.seeds:
            raise ConfigError("at least one seed pair is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed pairs must be unique")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ConfigError(f"strategy names must be unique, got {names}")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.evaluator not in EVALUATORS:
            raise ConfigError(f"evaluator must be one of {EVALUATORS}")
        if self.inference not in ("auto", "exact", "mean_field"):
            raise ConfigError("inference must be auto, exact or mean_field")
        if self.baseline not in names:
            raise ConfigError(f"baseline {self.baseline!r} is not among the strategies {names}")
        if isinstance(self.source, DatasetSource):
            if self.evaluator == "bayes":
                raise ConfigError("the bayes evaluator needs a csbm source")
            gt = [s.name for s in self.strategies if s.is_ground_truth]
            if gt:
                raise ConfigError(f"ground-truth strategies {gt} need a csbm source")

    def resolved_budget(self, num_classes: int) -> int:
        return 5 * num_classes if self.budget is None else int(self.budget)

    def evaluator_for(self, strategy: Strategy) -> str:
        if self.evaluator != "auto":
            return self.evaluator
        return "bayes" if strategy.is_ground_truth else "sgc"


@dataclass(frozen=True)
class StepRow:
    step: int
    queried: int  # -1 for the initial evaluation
    n_labeled: int
    test_accuracy: float


@dataclass(frozen=True)
class RunRecord:
    strategy: str
    split_seed: int
    run_seed: int
    rows: tuple

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.rows])

    @property
    def auc(self) -> float:
        return normalized_auc(self)

    @property
    def final_accuracy(self) -> float:
        return float(self.rows[-1].test_accuracy)


def split_test(g: Graph, seed, fraction: float = 0.2):
    """Reserve floor(fraction * n) uniformly drawn test nodes; returns sorted (test, pool)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.n)
    k = int(np.floor(fraction * g.n))
    test, pool = np.sort(perm[:k]), np.sort(perm[k:])
    missing = sorted(set(range(g.num_classes)) - set(g.labels[pool].tolist()))
    if missing:
        warnings.warn(f"classes {missing} have no node outside the test set", stacklevel=2)
    return test, pool


def init_labels(pool, labels, seed, num_classes: int | None = None) -> LabelState:
    """Reveal one uniformly drawn pool node per class."""
    labels = np.asarray(labels, dtype=np.int64)
    pool = np.sort(np.asarray(pool, dtype=np.int64))
    C = int(labels.max()) + 1 if num_classes is None else int(num_classes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chosen = []
    for c in range(C):
        members = pool[labels[pool] == c]
        if len(members) == 0:
            raise ValueError(f"class {c} has no node in the acquisition pool")
        chosen.append(int(rng.choice(members)))
    return LabelState.from_observed(labels, chosen, C)


def normalized_auc(record) -> float:
    """Trapezoid area under the accuracy curve over unit steps, divided by the budget.

    Accepts a ``RunRecord`` or a sequence of per-step accuracies. A single
    accuracy is its own AUC.
    """
    acc = record.accuracies if isinstance(record, RunRecord) else np.asarray(record, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("need at least one accuracy")
    if acc.size == 1:
        return float(acc[0])
    return float(((acc[1:] + acc[:-1]) / 2.0).sum() / (acc.size - 1))


def _graph_for(cfg: ExperimentConfig, split_seed: int, cache: dict) -> Graph:
    if isinstance(cfg.source, DatasetSource):
        key = ("dataset",)
        if key not in cache:
            cache[key] = load_dataset(cfg.source.path, normalize=cfg.source.normalize)
        return cache[key]
    key = ("csbm", split_seed)
    if key not in cache:
        cache[key] = sample(cfg.source.params, [split_seed, 0])
    return cache[key]


def _accuracy(pred, truth) -> float:
    return float(np.count_nonzero(pred == truth)) / len(truth)


def run_al(cfg: ExperimentConfig, strategy: Strategy, seeds, *, graph: Graph | None = None) -> RunRecord:
    """Run one acquisition trajectory and record test accuracy after every step.

    The graph of a CSBM source is sampled from ``[split_seed, 0]`` and the
    test split drawn from ``[split_seed, 1]``; the initial labels and any
    strategy randomness come from ``[split_seed, run_seed, 2]``.
    """
    split_seed, run_seed = int(seeds[0]), int(seeds[1])
    g = graph if graph is not None else _graph_for(cfg, split_seed, {})
    params = cfg.source.params if isinstance(cfg.source, CsbmSource) else None
    C = g.num_classes
    budget = cfg.resolved_budget(C)
    test, pool = split_test(g, [split_seed, 1], cfg.test_fraction)
    if budget > len(pool) - C:
        raise ConfigError(f"budget {budget} exceeds the {len(pool) - C} acquirable pool nodes")
    rng = np.random.default_rng([split_seed, run_seed, 2])
    state = init_labels(pool, g.labels, rng, C)
    test_mask = np.zeros(g.n, dtype=bool)
    test_mask[test] = True
    pool_mask = ~test_mask

    evaluator = cfg.evaluator_for(strategy)
    decode_mode = strategy.mode if cfg.misspecified_decoder else "correct"
    decode_inference = strategy.inference if strategy.is_ground_truth else cfg.inference
    needs_sgc = evaluator == "sgc" or strategy.kind in ("predictive_aleatoric", "energy", "mp", "esp")
    diffused = sgc.diffuse(g, cfg.classifier.diffusion_steps) if needs_sgc else None

    rows = []
    queried = -1
    for step in range(budget + 1):
        obs = state.observed
        if np.any(test_mask[obs]):
            raise AssertionError("a test node entered the training set")
        model = marginals = None
        try:
            if needs_sgc:
                model = sgc.fit(diffused, obs, state.labels[obs], C, cfg.classifier)
            if evaluator == "bayes" or strategy.is_ground_truth:
                marginals = bayes_marginals(params, g, state, decode_inference, decode_mode,
                                            cfg.mean_field, cfg.max_terms)
            if evaluator == "bayes":
                pred = np.argmax(marginals[test], axis=1)
            else:
                pred = np.argmax(sgc.predict_proba(model, diffused[test]), axis=1)
            rows.append(StepRow(step, queried, len(obs), _accuracy(pred, g.labels[test])))
            if step == budget:
                break
            # the scorer may reuse the decoder marginals only if they use its own likelihood
            reuse = marginals if strategy.is_ground_truth and decode_mode == strategy.mode else None
            ctx = AcquisitionContext(
                params=params,
                truth=g.labels if strategy.is_ground_truth else None,
                model=model,
                diffused=diffused,
                rng=rng,
                pool=pool_mask,
                sgc_config=cfg.classifier,
                mean_field=cfg.mean_field,
                max_terms=cfg.max_terms,
                marginals=reuse,
            )
            queried = next_query(strategy, g, state, ctx)
        except (ConfigError, AssertionError):
            raise
        except Exception as exc:
            raise RunError(
                f"{strategy.name} (split_seed={split_seed}, run_seed={run_seed}) failed at step {step}: {exc}"
            ) from exc
        if test_mask[queried] or state.is_observed(queried):
            raise AssertionError(f"{strategy.name} queried an ineligible node {queried}")
        state = state.reveal(queried, int(g.labels[queried]))
    return RunRecord(strategy.name, split_seed, run_seed, tuple(rows))


def _run_task(args):
    cfg, si, seeds = args
    strategy = cfg.strategies[si]
    try:
        return run_al(cfg, strategy, seeds)
    except ConfigError:
        raise
    except Exception as exc:
        log.error("%s", exc)
        return {"strategy": strategy.name, "split_seed": seeds[0], "run_seed": seeds[1],
                "error": f"{type(exc).__name__}: {exc}"}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1):
    """Run every (strategy, seed pair). Returns ``(records, failures)`` in canonical order.

    Results do not depend on ``jobs``: every run seeds its own generators and
    results are collected in submission order.
    """
    tasks = [(cfg, si, seeds) for si in range(len(cfg.strategies)) for seeds in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    records = [r for r in results if isinstance(r, RunRecord)]
    failures = [r for r in results if not isinstance(r, RunRecord)]
    return records, failures


def _stats(values):
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std())}


def aggregate(records, baseline: str | None = None) -> dict:
    """Per-strategy mean/std (population) of AUC and final accuracy.

    With a ``baseline``, also the mean/std of paired differences against it
    over the seed pairs both strategies completed.
    """
    by_strategy: dict = {}
    for r in records:
        by_strategy.setdefault(r.strategy, {})[(r.split_seed, r.run_seed)] = r
    base = by_strategy.get(baseline) if baseline is not None else None
    out = {}
    for name in sorted(by_strategy):
        runs = by_strategy[name]
        keys = sorted(runs)
        entry = {
            "runs": len(keys),
            "auc": _stats([runs[k].auc for k in keys]),
            "final_accuracy": _stats([runs[k].final_accuracy for k in keys]),
        }
        if base is not None:
            paired = [k for k in keys if k in base]
            if paired:
                entry["paired_vs_baseline"] = {
                    "baseline": baseline,
                    "pairs": len(paired),
                    "auc": _stats([runs[k].auc - base[k].auc for k in paired]),
                    "final_accuracy": _stats([runs[k].final_accuracy - base[k].final_accuracy for k in paired]),
                }
        out[name] = entry
    return out


def curves_csv(records) -> str:
    """The ``curves.csv`` text for ``records`` (one row per step)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in records:
        for row in r.rows:
            w.writerow([r.strategy, r.split_seed, r.run_seed, row.step, row.n_labeled, repr(row.test_accuracy)])
    return buf.getvalue()


def read_curves(path) -> list:
    """Parse a ``curves.csv`` back into ``RunRecord``s (queried nodes are not stored)."""
    groups: dict = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["strategy"], int(row["split_seed"]), int(row["run_seed"]))
            groups.setdefault(key, []).append(
                StepRow(int(row["step"]), -1, int(row["n_labeled"]), float(row["test_accuracy"]))
            )
    return [RunRecord(k[0], k[1], k[2], tuple(sorted(v, key=lambda s: s.step))) for k, v in groups.items()]

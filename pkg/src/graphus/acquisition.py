"""Acquisition strategies behind a single ``next_query`` entry point."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from graphus import approx, sgc
from graphus.csbm import CsbmParams
from graphus.exact import DEFAULT_MAX_TERMS, LabelState, aleatoric_confidences, total_confidences
from graphus.graph import Graph, degree_centrality, pagerank, ppr_matrix
from graphus.mean_field import MeanFieldConfig, mean_field_marginals

__all__ = [
    "KINDS",
    "GT_KINDS",
    "Strategy",
    "AcquisitionContext",
    "next_query",
    "strategy_scores",
    "gt_scores",
    "bayes_marginals",
    "predictive_scores",
    "coreset_scores",
    "coreset_pick",
]

GT_KINDS = ("gt_epistemic", "gt_total", "gt_aleatoric", "gt_epistemic_misspecified")
MODEL_KINDS = ("predictive_aleatoric", "energy", "mp", "esp")
KINDS = ("random",) + GT_KINDS + MODEL_KINDS + ("degree", "ppr", "coreset_features", "coreset_ppr")
INFERENCE = ("auto", "exact", "mean_field")
CORESET_EPS = 1e-12


@dataclass(frozen=True)
class Strategy:
    """An acquisition strategy.

    ``inference`` only matters for the ground-truth kinds. Recognized
    ``options``: ``name`` (label in outputs), ``teleport`` and ``iterations``
    (PageRank-based kinds), ``candidate_limit`` and ``n_jobs`` (mp/esp).
    """

    kind: str
    inference: str = "auto"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.inference not in INFERENCE:
            raise ValueError(f"inference must be one of {INFERENCE}")

    @property
    def name(self) -> str:
        return self.options.get("name", self.kind)

    @property
    def is_ground_truth(self) -> bool:
        return self.kind in GT_KINDS

    @property
    def mode(self) -> str:
        return "misspecified" if self.kind.endswith("_misspecified") else "correct"


@dataclass
class AcquisitionContext:
    """Everything a strategy may look at besides the graph and label state.

    ``truth`` (the full label vector) is only read by the ground-truth kinds.
    ``pool`` masks the nodes that may be acquired at all (test nodes excluded).
    ``marginals`` may carry precomputed total confidences for the gt kinds.
    """

    params: CsbmParams | None = None
    truth: np.ndarray | None = None
    model: sgc.SgcModel | None = None
    diffused: np.ndarray | None = None
    rng: np.random.Generator | None = None
    pool: np.ndarray | None = None
    sgc_config: sgc.SgcConfig = field(default_factory=sgc.SgcConfig)
    mean_field: MeanFieldConfig = field(default_factory=MeanFieldConfig)
    max_terms: int = DEFAULT_MAX_TERMS
    marginals: np.ndarray | None = None


def bayes_marginals(params, g, state, inference="auto", mode="correct",
                    mf_config=None, max_terms=DEFAULT_MAX_TERMS) -> np.ndarray:
    """n x C total confidences of the Bayesian classifier (observed rows one-hot).

    ``auto`` enumerates exactly when C**|U| fits under ``max_terms`` and falls
    back to mean field otherwise.
    """
    if inference == "auto":
        inference = "exact" if float(params.num_classes) ** len(state.unobserved) <= max_terms else "mean_field"
    if inference == "exact":
        return total_confidences(params, g, state, mode, max_terms)
    return mean_field_marginals(params, g, state, mf_config, mode).gamma


def gt_scores(kind, inference, params, g, state, truth, candidates=None, *, mf_config=None,
              max_terms=DEFAULT_MAX_TERMS, marginals=None) -> np.ndarray:
    """Ground-truth uncertainty of each candidate, evaluated at its true label.

    gt_epistemic: c_alea / c_total; gt_total: 1 / c_total; gt_aleatoric: 1 / c_alea.
    """
    if kind not in GT_KINDS:
        raise ValueError(f"{kind!r} is not a ground-truth kind")
    if params is None or truth is None:
        raise ValueError("ground-truth strategies need the CSBM parameters and the true labels")
    mode = "misspecified" if kind.endswith("_misspecified") else "correct"
    truth = np.asarray(truth, dtype=np.int64)
    cands = state.unobserved if candidates is None else np.asarray(candidates, dtype=np.int64)
    if marginals is None:
        marginals = bayes_marginals(params, g, state, inference, mode, mf_config, max_terms)
    alea = aleatoric_confidences(params, g, truth, mode)[cands, truth[cands]]
    total = np.asarray(marginals)[cands, truth[cands]]
    with np.errstate(divide="ignore"):
        log_alea, log_total = np.log(alea), np.log(total)
    if kind.startswith("gt_epistemic"):
        log_u = log_alea - log_total
    elif kind == "gt_total":
        log_u = -log_total
    else:
        log_u = -log_alea
    log_u = np.where(np.isnan(log_u), np.inf, log_u)
    return np.exp(log_u)


def predictive_scores(kind, model, diffused, candidates=None, temperature: float = 1.0) -> np.ndarray:
    """-max_c p for ``predictive_aleatoric``; the energy score for ``energy``."""
    X = np.asarray(diffused)
    if candidates is not None:
        X = X[np.asarray(candidates, dtype=np.int64)]
    if kind == "predictive_aleatoric":
        return -sgc.predict_proba(model, X).max(axis=1)
    if kind == "energy":
        return sgc.energy_score(model, X, temperature=temperature)
    raise ValueError(f"{kind!r} is not a predictive kind")


def coreset_scores(distance_kind, g: Graph, state: LabelState, candidates=None,
                   teleport: float = 0.2, iterations: int = 10) -> np.ndarray:
    """Distance of each candidate to its closest labeled node."""
    obs = state.observed
    if len(obs) == 0:
        raise ValueError("coreset selection needs at least one labeled node")
    cands = state.unobserved if candidates is None else np.asarray(candidates, dtype=np.int64)
    if distance_kind == "features":
        return cdist(g.features[cands], g.features[obs]).min(axis=1)
    if distance_kind == "ppr":
        ppr = ppr_matrix(g, obs, teleport, iterations)
        return (1.0 / (ppr[cands] + CORESET_EPS)).min(axis=1)
    raise ValueError("distance_kind must be 'features' or 'ppr'")


def coreset_pick(distance_kind, g: Graph, state: LabelState, candidates=None, **kw) -> int:
    cands = state.unobserved if candidates is None else np.asarray(candidates, dtype=np.int64)
    return int(cands[np.argmax(coreset_scores(distance_kind, g, state, cands, **kw))])


def _candidates(state: LabelState, pool) -> np.ndarray:
    free = state.unobserved
    if pool is not None:
        free = free[np.asarray(pool, dtype=bool)[free]]
    return free


def _subsample(strategy, cands, rng):
    limit = strategy.options.get("candidate_limit")
    if limit is None or len(cands) <= limit:
        return cands
    if rng is None:
        raise ValueError("candidate_limit needs an rng")
    return np.sort(rng.choice(cands, size=int(limit), replace=False))


def strategy_scores(strategy: Strategy, g: Graph, state: LabelState, ctx: AcquisitionContext,
                    candidates) -> np.ndarray:
    """Scores aligned with ``candidates``; the acquirer takes the argmax."""
    kind = strategy.kind
    opts = strategy.options
    if kind in GT_KINDS:
        return gt_scores(kind, strategy.inference, ctx.params, g, state, ctx.truth, candidates,
                         mf_config=ctx.mean_field, max_terms=ctx.max_terms, marginals=ctx.marginals)
    if kind == "degree":
        return degree_centrality(g)[candidates]
    if kind == "ppr":
        return pagerank(g, opts.get("teleport", 0.2), opts.get("iterations", 10))[candidates]
    if kind in ("coreset_features", "coreset_ppr"):
        return coreset_scores(kind.split("_")[1], g, state, candidates,
                              opts.get("teleport", 0.2), opts.get("iterations", 10))
    diffused = ctx.diffused if ctx.diffused is not None else sgc.diffuse(g, ctx.sgc_config.diffusion_steps)
    model = ctx.model if ctx.model is not None else approx.base_model(diffused, state, ctx.sgc_config)
    if kind in ("predictive_aleatoric", "energy"):
        return predictive_scores(kind, model, diffused, candidates, ctx.sgc_config.energy_temperature)
    scorer = approx.mp_scores if kind == "mp" else approx.esp_scores
    return scorer(g, state, ctx.sgc_config, candidates=candidates, diffused=diffused, model=model,
                  n_jobs=opts.get("n_jobs", 1))


def next_query(strategy: Strategy, g: Graph, state: LabelState, ctx: AcquisitionContext | None = None) -> int:
    """Pick one unobserved (and acquirable) node.

    Scoring strategies return the highest-scoring candidate, ties going to the
    lowest node index; ``random`` draws uniformly with ``ctx.rng``.
    """
    ctx = ctx or AcquisitionContext()
    cands = _candidates(state, ctx.pool)
    if len(cands) == 0:
        raise ValueError("no unobserved node left to acquire")
    if len(cands) == 1:
        return int(cands[0])
    if strategy.kind == "random":
        if ctx.rng is None:
            raise ValueError("random acquisition needs an rng")
        return int(ctx.rng.choice(cands))
    if strategy.kind in ("mp", "esp"):
        cands = _subsample(strategy, cands, ctx.rng)
    scores = np.asarray(strategy_scores(strategy, g, state, ctx, cands), dtype=np.float64)
    if np.any(np.isnan(scores)):
        raise FloatingPointError(f"{strategy.name} produced NaN scores")
    return int(cands[np.argmax(scores)])

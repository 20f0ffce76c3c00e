"""Pseudo-label approximations of epistemic uncertainty on an SGC backbone.

Both estimators only read the revealed labels in the ``LabelState``; the
graph's own label vector is never touched.

MP (multiple pseudo-labels)
    For candidate ``i`` an auxiliary model is fit on the revealed labels plus
    the base model's pseudo-labels of every other unobserved node. The score
    is ``f_aux_i(i, yhat_i) / f(i, yhat_i)``.

ESP (expected single pseudo-label)
    For candidate ``i`` and every class ``c`` an auxiliary model is fit on the
    revealed labels plus ``y_i = c``. The score is

        sum_c [prod_{j in U - i} max_c' f_aux_ic(j, c')] * f(i, c) * f(i, yhat_i)

    with all node-independent factors dropped, so scores are only comparable
    within one acquisition round.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from graphus import sgc
from graphus.exact import LabelState
from graphus.logspace import LOG_FLOOR, floored_log, logsumexp

__all__ = ["PseudoLabels", "pseudo_labels", "mp_scores", "esp_scores", "base_model"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoLabels:
    labels: np.ndarray
    source_model: sgc.SgcModel


def base_model(diffused, state: LabelState, cfg: sgc.SgcConfig) -> sgc.SgcModel:
    obs = state.observed
    return sgc.fit(diffused, obs, state.labels[obs], state.num_classes, cfg)


def pseudo_labels(model: sgc.SgcModel, diffused, state: LabelState) -> PseudoLabels:
    """Argmax predictions, overridden by the revealed label wherever one exists."""
    proba = sgc.predict_proba(model, diffused)
    labels = np.argmax(proba, axis=1)
    obs = state.observed
    labels[obs] = state.labels[obs]
    return PseudoLabels(labels, model)


def _map(fn, items, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _prepare(g, state, cfg, diffused, model):
    cfg = cfg or sgc.SgcConfig()
    if diffused is None:
        diffused = sgc.diffuse(g, cfg.diffusion_steps)
    if model is None:
        model = base_model(diffused, state, cfg)
    return cfg, diffused, model


def _candidates(state, candidates):
    free = state.unobserved
    if candidates is None:
        return free
    candidates = np.asarray(candidates, dtype=np.int64)
    if np.any(state.labels[candidates] >= 0):
        raise ValueError("candidates must be unobserved")
    return candidates


def _finish(log_scores, return_log):
    log_scores = np.asarray(log_scores, dtype=np.float64)
    if return_log:
        return log_scores
    out = np.exp(log_scores)
    out[log_scores == -np.inf] = -np.inf
    return out


def mp_scores(g, state: LabelState, cfg: sgc.SgcConfig | None = None, *, candidates=None,
              diffused=None, model=None, n_jobs: int = 1, return_log: bool = False,
              on_fit=None) -> np.ndarray:
    """MP epistemic-uncertainty estimate for each candidate (default: all unobserved nodes).

    ``on_fit(i, train_idx, train_labels)`` is called before every auxiliary fit.
    Failed auxiliary fits yield ``-inf``.
    """
    cfg, diffused, model = _prepare(g, state, cfg, diffused, model)
    cands = _candidates(state, candidates)
    pseudo = pseudo_labels(model, diffused, state).labels
    log_total = floored_log(sgc.predict_proba(model, diffused))
    everyone = np.arange(state.n)

    def score(i):
        train = everyone[everyone != i]
        if on_fit is not None:
            on_fit(i, train, pseudo[train])
        try:
            aux = sgc.fit(diffused, train, pseudo[train], state.num_classes, cfg)
            log_alea = floored_log(sgc.predict_proba(aux, diffused[[i]]))[0, pseudo[i]]
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("MP auxiliary fit for node %d failed: %s", i, exc)
            return -np.inf
        return float(log_alea - log_total[i, pseudo[i]])

    return _finish(_map(score, cands, n_jobs), return_log)


def esp_scores(g, state: LabelState, cfg: sgc.SgcConfig | None = None, *, candidates=None,
               diffused=None, model=None, n_jobs: int = 1, return_log: bool = False,
               on_fit=None) -> np.ndarray:
    """ESP epistemic-uncertainty estimate for each candidate (default: all unobserved nodes)."""
    cfg, diffused, model = _prepare(g, state, cfg, diffused, model)
    cands = _candidates(state, candidates)
    free = state.unobserved
    obs = state.observed
    obs_labels = state.labels[obs]
    log_base = floored_log(sgc.predict_proba(model, diffused))
    yhat = np.argmax(log_base, axis=1)

    def score(i):
        others = free[free != i]
        train = np.append(obs, i)
        terms = []
        try:
            for c in range(state.num_classes):
                if log_base[i, c] <= LOG_FLOOR:
                    continue
                labels = np.append(obs_labels, c)
                if on_fit is not None:
                    on_fit(i, train, labels)
                aux = sgc.fit(diffused, train, labels, state.num_classes, cfg)
                proba = sgc.predict_proba(aux, diffused[others])
                # the surrogate's own argmax labels: the max probability per row
                log_joint = floored_log(proba.max(axis=1)).sum() if len(others) else 0.0
                terms.append(log_joint + log_base[i, c])
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("ESP auxiliary fit for node %d failed: %s", i, exc)
            return -np.inf
        return float(logsumexp(terms) + log_base[i, yhat[i]])

    return _finish(_map(score, cands, n_jobs), return_log)

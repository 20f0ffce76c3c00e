"""Naive mean-field approximation of the posterior over unobserved labels.

The factorized posterior q(y_U) = prod_i q_i(y_i) is parametrized by
``gamma[i, c] = q_i(y_i = c)``; observed rows are fixed one-hot vectors.
The fixed-point update of an unobserved row is

    log gamma[i, c] <- log p(c) + log N(X_i; mu_c) + sum_{j != i} sum_c' gamma[j, c'] log p(A_ij | c, c')

followed by renormalization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphus import kernels
from graphus.exact import DEFAULT_MAX_TERMS, ExactPosterior, LabelState, node_potentials
from graphus.logspace import logsumexp

__all__ = ["MeanFieldConfig", "MeanFieldResult", "mean_field_marginals", "elbo", "approximation_error"]

SCHEDULES = ("sequential", "parallel")
INITS = ("uniform", "feature_likelihood")


@dataclass(frozen=True)
class MeanFieldConfig:
    max_iterations: int = 200
    tolerance: float = 1e-6
    update_schedule: str = "sequential"
    damping: float = 0.5
    init: str = "feature_likelihood"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.update_schedule not in SCHEDULES:
            raise ValueError(f"update_schedule must be one of {SCHEDULES}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")


@dataclass
class MeanFieldResult:
    gamma: np.ndarray
    converged: bool
    iterations: int
    elbo_trace: list | None = None


def _softmax_rows(logits):
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def mean_field_marginals(params, g, state: LabelState, cfg: MeanFieldConfig | None = None,
                         mode: str = "correct", trace: bool = False) -> MeanFieldResult:
    """Run the fixed-point iteration until the largest change drops below the tolerance.

    Non-convergence is reported through ``converged=False``. With ``trace`` the
    ELBO after initialization and after every iteration is recorded.
    """
    cfg = cfg or MeanFieldConfig()
    unary, L1, L0 = node_potentials(params, g, mode)
    C = params.num_classes
    free = state.unobserved
    gamma = state.one_hot()
    if cfg.init == "uniform":
        gamma[free] = 1.0 / C
    else:
        gamma[free] = _softmax_rows(unary[free])
    history = [elbo(params, g, state, gamma, mode)] if trace else None
    if len(free) == 0:
        return MeanFieldResult(gamma, True, 0, history)

    adj = g.adjacency
    indptr = adj.indptr.astype(np.int32)
    indices = adj.indices.astype(np.int32)
    order = free.astype(np.int64)
    L1c, L0c = np.ascontiguousarray(L1), np.ascontiguousarray(L0)
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        if cfg.update_schedule == "sequential":
            total = gamma.sum(axis=0)
            change = kernels.mean_field_sweep(gamma, total, order, indptr, indices, L1c, L0c, unary)
        else:
            nb = np.asarray(adj @ gamma)
            rest = gamma.sum(axis=0)[None, :] - gamma - nb
            new = _softmax_rows(unary + nb @ L1.T + rest @ L0.T)[free]
            new = (1.0 - cfg.damping) * new + cfg.damping * gamma[free]
            change = float(np.abs(new - gamma[free]).max())
            gamma[free] = new
        if trace:
            history.append(elbo(params, g, state, gamma, mode))
        if change <= cfg.tolerance:
            converged = True
            break
    return MeanFieldResult(gamma, converged, it, history)


def elbo(params, g, state: LabelState, gamma, mode: str = "correct") -> float:
    """Expected log joint under q plus the entropy of the unobserved rows."""
    unary, L1, L0 = node_potentials(params, g, mode)
    gamma = np.asarray(gamma, dtype=np.float64)
    nb = np.asarray(g.adjacency @ gamma)
    rest = gamma.sum(axis=0)[None, :] - gamma - nb
    unary_term = float((gamma * unary).sum())
    # each unordered pair appears twice in the double sum
    pair_term = 0.5 * float((gamma * (nb @ L1.T + rest @ L0.T)).sum())
    q = gamma[state.unobserved]
    with np.errstate(divide="ignore", invalid="ignore"):
        entropy = -float(np.where(q > 0, q * np.log(q), 0.0).sum())
    return unary_term + pair_term + entropy


def approximation_error(params, g, state: LabelState, gamma, mode: str = "correct",
                        max_terms: int = DEFAULT_MAX_TERMS) -> dict:
    """Summary of |gamma[i, c] - p(y_i = c | A, X, y_O)| over unobserved nodes and classes."""
    post = ExactPosterior(params, g, state, mode, max_terms)
    err = np.abs(np.asarray(gamma)[post.free] - post.marginals()).ravel()
    if err.size == 0:
        return {"median": 0.0, "mean": 0.0, "max": 0.0, "errors": err}
    return {"median": float(np.median(err)), "mean": float(err.mean()), "max": float(err.max()), "errors": err}

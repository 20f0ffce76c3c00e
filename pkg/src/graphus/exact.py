"""Exact ground-truth confidences by enumerating unobserved label assignments.

Confidences follow the Bayesian classifier that knows the true CSBM
parameters:

* total confidence ``p(y_i = c | A, X, y_O)`` (marginal over the unobserved rest),
* aleatoric confidence ``p(y_i = c | A, X, y_{-i})`` with every other label revealed,
* epistemic uncertainty ``u_epi(i, c) = c_alea(i, c) / c_total(i, c)``.

All ratios are formed as differences of logs and exponentiated last.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graphus import kernels
from graphus.csbm import CsbmParams, edge_log_tables, feature_log_likelihood, log_prior
from graphus.errors import EnumerationLimitError
from graphus.graph import Graph
from graphus.logspace import LOG_FLOOR, logsumexp

__all__ = [
    "LabelState",
    "ConfidenceReport",
    "ProportionalityReport",
    "DEFAULT_MAX_TERMS",
    "node_potentials",
    "ExactPosterior",
    "total_confidence",
    "total_confidences",
    "aleatoric_confidence",
    "aleatoric_confidences",
    "epistemic_uncertainty",
    "confidence_report",
    "reveal_gain",
    "proportionality_checks",
    "bayes_predict",
]

DEFAULT_MAX_TERMS = 10**7


@dataclass(frozen=True, eq=False)
class LabelState:
    """Which nodes have revealed labels.

    ``labels[i]`` is the revealed class of node ``i`` or ``-1`` if ``i`` is
    still unobserved.
    """

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if np.any(labels < -1) or np.any(labels >= self.num_classes):
            raise ValueError(f"revealed labels must lie in [0, {self.num_classes})")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, n: int, num_classes: int) -> "LabelState":
        return cls(np.full(n, -1), num_classes)

    @classmethod
    def from_observed(cls, truth, observed, num_classes: int) -> "LabelState":
        """Reveal ``truth[i]`` for every ``i`` in ``observed``."""
        truth = np.asarray(truth)
        labels = np.full(len(truth), -1)
        observed = np.asarray(observed, dtype=np.int64)
        labels[observed] = truth[observed]
        return cls(labels, num_classes)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def observed(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def unobserved(self) -> np.ndarray:
        return np.flatnonzero(self.labels < 0)

    def is_observed(self, i: int) -> bool:
        return self.labels[i] >= 0

    def reveal(self, i: int, label: int) -> "LabelState":
        if self.labels[i] >= 0:
            raise ValueError(f"node {i} is already observed")
        labels = self.labels.copy()
        labels[i] = label
        return LabelState(labels, self.num_classes)

    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.n, self.num_classes))
        obs = self.observed
        out[obs, self.labels[obs]] = 1.0
        return out


@dataclass(frozen=True)
class ConfidenceReport:
    node: int
    total: np.ndarray
    aleatoric: np.ndarray
    epistemic_uncertainty_at: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ProportionalityReport:
    degenerate: bool
    nodes: np.ndarray
    log_ratio_total: np.ndarray
    log_ratio_aleatoric: np.ndarray
    cov_total: float
    cov_aleatoric: float
    log_constant: float

    def to_dict(self) -> dict:
        return {
            "degenerate": self.degenerate,
            "cov_total": self.cov_total,
            "cov_aleatoric": self.cov_aleatoric,
            "log_constant": self.log_constant,
        }


def node_potentials(params: CsbmParams, g: Graph, mode: str = "correct"):
    """Floored (unary, L1, L0): per-node log prior + feature term and the edge tables."""
    if params.n != g.n or params.num_classes != g.num_classes:
        raise ValueError("graph does not match the CSBM parameters")
    unary = np.maximum(log_prior(params)[None, :] + feature_log_likelihood(params, g.features), LOG_FLOOR)
    L1, L0 = edge_log_tables(params, mode)
    return unary, L1, L0


def _pair_table(adj_block, L1, L0):
    # pair[u, v] = L1 if A_uv else L0; diagonal is unused
    a = adj_block[:, :, None, None]
    return np.ascontiguousarray(a * L1 + (1.0 - a) * L0)


class ExactPosterior:
    """Exact posterior over the unobserved labels of one (params, graph, state).

    ``score(y_U)`` equals ``log p(A, X, y_O, y_U)`` up to a constant that only
    depends on the observed labels; marginals and the normalizer are computed
    in a single enumeration pass.
    """

    def __init__(self, params, g, state, mode="correct", max_terms=DEFAULT_MAX_TERMS):
        unary, L1, L0 = node_potentials(params, g, mode)
        C = params.num_classes
        free = state.unobserved
        if float(C) ** len(free) > max_terms:
            raise EnumerationLimitError(
                f"exact enumeration needs {C}**{len(free)} terms (cap {max_terms:.0e}); use mean_field"
            )
        A = g.dense_adjacency()
        obs = state.observed
        y_obs = state.labels[obs]
        # interactions with observed nodes fold into the unary terms
        a_uo = A[np.ix_(free, obs)]
        self.unary = np.ascontiguousarray(
            unary[free] + a_uo @ L1[:, y_obs].T + (1.0 - a_uo) @ L0[:, y_obs].T
        )
        self.pair = _pair_table(A[np.ix_(free, free)], L1, L0)
        self.free = free
        self.state = state
        self.num_classes = C
        self.log_z, self.log_marg = kernels.enumerate_log_marginals(self.unary, self.pair)

    def position(self, i: int) -> int:
        pos = np.searchsorted(self.free, i)
        if pos >= len(self.free) or self.free[pos] != i:
            raise ValueError(f"node {i} is not unobserved")
        return int(pos)

    def score(self, y_free) -> float:
        y = np.asarray(y_free, dtype=np.int64)
        m = len(self.free)
        s = self.unary[np.arange(m), y].sum()
        for u in range(m):
            s += self.pair[u, np.arange(u + 1, m), y[u], y[u + 1:]].sum()
        return float(s)

    def marginals(self) -> np.ndarray:
        """|U| x C matrix of p(y_u = c | A, X, y_O)."""
        return np.exp(self.log_marg - self.log_z)

    def log_posterior(self, y_free) -> float:
        return self.score(y_free) - self.log_z


def _truth(g: Graph, truth):
    return g.labels if truth is None else np.asarray(truth, dtype=np.int64)


def total_confidences(params, g, state, mode="correct", max_terms=DEFAULT_MAX_TERMS) -> np.ndarray:
    """n x C marginals; observed rows are one-hot."""
    post = ExactPosterior(params, g, state, mode, max_terms)
    out = state.one_hot()
    out[post.free] = post.marginals()
    return out


def total_confidence(params, g, state, i, mode="correct", max_terms=DEFAULT_MAX_TERMS) -> np.ndarray:
    if state.is_observed(i):
        raise ValueError(f"node {i} is observed")
    return total_confidences(params, g, state, mode, max_terms)[i]


def aleatoric_confidences(params, g, y, mode="correct") -> np.ndarray:
    """n x C matrix; row i is p(y_i = . | A, X, y_{-i}) with every other label fixed to ``y``."""
    unary, L1, L0 = node_potentials(params, g, mode)
    y = np.asarray(y, dtype=np.int64)
    onehot = np.zeros((g.n, params.num_classes))
    onehot[np.arange(g.n), y] = 1.0
    nb = np.asarray(g.adjacency @ onehot)
    rest = onehot.sum(axis=0)[None, :] - onehot - nb
    logits = unary + nb @ L1.T + rest @ L0.T
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def aleatoric_confidence(params, g, i, y_minus_i, mode="correct") -> np.ndarray:
    """Aleatoric confidence of node ``i``; ``y_minus_i[i]`` is ignored."""
    y = np.array(y_minus_i, dtype=np.int64)
    y[i] = 0
    return aleatoric_confidences(params, g, y, mode)[i]


def epistemic_uncertainty(params, g, state, i, c=None, truth=None, mode="correct",
                          max_terms=DEFAULT_MAX_TERMS) -> float:
    """c_alea(i, c) / c_total(i, c); ``c`` defaults to the true label of ``i``."""
    y = _truth(g, truth)
    c = int(y[i]) if c is None else int(c)
    with np.errstate(divide="ignore"):
        log_total = np.log(total_confidence(params, g, state, i, mode, max_terms)[c])
        log_alea = np.log(aleatoric_confidence(params, g, i, y, mode)[c])
    if log_total == -np.inf:
        return np.inf
    return float(np.exp(log_alea - log_total))


def confidence_report(params, g, state, i, truth=None, mode="correct",
                      max_terms=DEFAULT_MAX_TERMS) -> ConfidenceReport:
    y = _truth(g, truth)
    total = total_confidence(params, g, state, i, mode, max_terms)
    alea = aleatoric_confidence(params, g, i, y, mode)
    with np.errstate(divide="ignore", invalid="ignore"):
        epi = {c: (float(alea[c] / total[c]) if total[c] > 0 else np.inf) for c in range(len(total))}
    return ConfidenceReport(node=int(i), total=total, aleatoric=alea, epistemic_uncertainty_at=epi)


def _log_reveal_parts(params, g, state, i, y, mode, max_terms, post=None):
    """(log numerator, log denominator) of the relative posterior gain.

    numerator   = p(y_{U-i} = y*_{U-i} | A, X, y_O, y_i = y*_i)
    denominator = p(y_{U-i} = y*_{U-i} | A, X, y_O)
    """
    if post is None:
        post = ExactPosterior(params, g, state, mode, max_terms)
    pos = post.position(i)
    clamped = ExactPosterior(params, g, state.reveal(i, int(y[i])), mode, max_terms)
    log_num = clamped.log_posterior(y[clamped.free])
    y_free = y[post.free].copy()
    joint = []
    for c in range(params.num_classes):
        y_free[pos] = c
        joint.append(post.score(y_free))
    log_den = float(logsumexp(joint)) - post.log_z
    return log_num, log_den


def reveal_gain(params, g, state, i, truth=None, mode="correct", max_terms=DEFAULT_MAX_TERMS) -> float:
    """Relative gain in the posterior of the remaining true labels from revealing node ``i``."""
    y = _truth(g, truth)
    log_num, log_den = _log_reveal_parts(params, g, state, i, y, mode, max_terms)
    if log_den == -np.inf:
        return np.inf
    return float(np.exp(log_num - log_den))


def _cov(log_values):
    # coefficient of variation, computed on values rescaled by their geometric mean
    v = np.exp(log_values - np.mean(log_values))
    return float(np.std(v) / np.mean(v))


def proportionality_checks(params, g, state, truth=None, mode="correct",
                       max_terms=DEFAULT_MAX_TERMS) -> ProportionalityReport:
    """Check that u_total / numerator and u_alea / denominator do not depend on the node.

    Both ratios should equal 1 / p(y_U = y*_U | A, X, y_O) for every unobserved node.
    """
    y = _truth(g, truth)
    free = state.unobserved
    post = ExactPosterior(params, g, state, mode, max_terms)
    log_constant = post.log_z - post.score(y[free])
    if len(free) < 2:
        empty = np.zeros(0)
        return ProportionalityReport(True, free, empty, empty, 0.0, 0.0, log_constant)
    log_total = post.log_marg - post.log_z
    alea = aleatoric_confidences(params, g, y, mode)
    r1, r2 = [], []
    for pos, i in enumerate(free):
        log_num, log_den = _log_reveal_parts(params, g, state, i, y, mode, max_terms, post=post)
        r1.append(-log_total[pos, y[i]] - log_num)
        r2.append(-np.log(alea[i, y[i]]) - log_den)
    r1, r2 = np.array(r1), np.array(r2)
    return ProportionalityReport(False, free, r1, r2, _cov(r1), _cov(r2), log_constant)


def bayes_predict(marginals, state) -> np.ndarray:
    """Per-node argmax of the marginals over the unobserved nodes (lowest class wins ties)."""
    marginals = np.asarray(marginals)
    return np.argmax(marginals[state.unobserved], axis=1)

"""Contextual stochastic block model: parameters, sampling and the joint likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from graphus.errors import InfeasibleParametersError
from graphus.graph import Graph
from graphus.logspace import LOG_FLOOR

__all__ = [
    "CsbmParams",
    "build_affiliation",
    "build_class_means",
    "feature_dim",
    "sample",
    "log_joint",
    "edge_log_tables",
    "feature_log_likelihood",
    "log_prior",
    "MODES",
]

MODES = ("correct", "misspecified")


@dataclass(frozen=True, eq=False)
class CsbmParams:
    """Full parameter set of a CSBM.

    Attributes:
        n: number of nodes.
        prior: length-C class prior.
        affiliation: symmetric C x C edge-probability matrix.
        class_means: C x d feature means.
        sigma_x: per-dimension feature standard deviation.
    """

    n: int
    prior: np.ndarray
    affiliation: np.ndarray
    class_means: np.ndarray
    sigma_x: float

    def __post_init__(self):
        prior = np.array(self.prior, dtype=np.float64)
        F = np.array(self.affiliation, dtype=np.float64)
        mu = np.array(self.class_means, dtype=np.float64)
        C = prior.shape[0]
        if self.n < 1:
            raise ValueError("n must be positive")
        if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ValueError("prior must be a probability vector")
        if F.shape != (C, C) or not np.allclose(F, F.T, rtol=0, atol=0):
            raise ValueError("affiliation must be a symmetric C x C matrix")
        if np.any(F < 0) or np.any(F > 1):
            raise InfeasibleParametersError("infeasible parameters: affiliation entries must lie in [0, 1]")
        if mu.ndim != 2 or mu.shape[0] != C:
            raise ValueError("class_means must have one row per class")
        if not self.sigma_x > 0:
            raise ValueError("sigma_x must be positive")
        for arr in (prior, F, mu):
            arr.flags.writeable = False
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "affiliation", F)
        object.__setattr__(self, "class_means", mu)
        object.__setattr__(self, "sigma_x", float(self.sigma_x))

    @property
    def num_classes(self) -> int:
        return self.prior.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.class_means.shape[1]

    @classmethod
    def homogeneous(
        cls,
        n: int,
        num_classes: int,
        expected_degree: float,
        structural_snr: float,
        feature_snr: float,
        sigma_x: float = 1.0,
        means_seed: int = 0,
        dim: int | None = None,
        prior=None,
    ) -> "CsbmParams":
        """Standard homogeneous CSBM; the class-mean spacing is ``feature_snr * sigma_x``."""
        d = feature_dim(n, num_classes) if dim is None else int(dim)
        F = build_affiliation(n, num_classes, expected_degree, structural_snr)
        mu = build_class_means(num_classes, d, feature_snr * sigma_x, means_seed)
        if prior is None:
            prior = np.full(num_classes, 1.0 / num_classes)
        return cls(n=n, prior=prior, affiliation=F, class_means=mu, sigma_x=sigma_x)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "prior": self.prior.tolist(),
            "affiliation": self.affiliation.tolist(),
            "class_means": self.class_means.tolist(),
            "sigma_x": self.sigma_x,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CsbmParams":
        return cls(
            n=int(data["n"]),
            prior=np.asarray(data["prior"], dtype=np.float64),
            affiliation=np.asarray(data["affiliation"], dtype=np.float64),
            class_means=np.asarray(data["class_means"], dtype=np.float64),
            sigma_x=float(data["sigma_x"]),
        )

    def relabel(self, perm) -> "CsbmParams":
        """Parameters with class ``c`` renamed to ``perm[c]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return CsbmParams(
            n=self.n,
            prior=self.prior[inv],
            affiliation=self.affiliation[np.ix_(inv, inv)],
            class_means=self.class_means[inv],
            sigma_x=self.sigma_x,
        )


def build_affiliation(n: int, num_classes: int, expected_degree: float, snr: float) -> np.ndarray:
    """Homogeneous affiliation matrix with intra/inter ratio ``snr`` and the given mean degree.

    q = E[deg] * C / (n - 1) / (snr + C - 1), p = snr * q.
    """
    if n < 2 or num_classes < 2:
        raise ValueError("need n >= 2 and at least two classes")
    if expected_degree <= 0 or snr <= 0:
        raise ValueError("expected_degree and snr must be positive")
    q = expected_degree * num_classes / (n - 1) / (snr + num_classes - 1)
    p = snr * q
    if p > 1 or q > 1:
        raise InfeasibleParametersError(
            f"infeasible parameters: edge probabilities p={p:.4g}, q={q:.4g} exceed 1 "
            f"(n={n}, C={num_classes}, expected_degree={expected_degree}, snr={snr})"
        )
    F = np.full((num_classes, num_classes), q)
    np.fill_diagonal(F, p)
    return F


def _haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def build_class_means(num_classes: int, d: int, delta_x: float, seed: int = 0) -> np.ndarray:
    """C points in R^d with all pairwise distances ``delta_x``, randomly rotated."""
    if delta_x <= 0:
        raise ValueError("delta_x must be positive")
    if d < num_classes - 1:
        raise InfeasibleParametersError(
            f"infeasible parameters: {num_classes} equidistant means need d >= {num_classes - 1}, got {d}"
        )
    # scaled standard basis has pairwise distance delta_x; center and express in
    # an orthonormal basis of its (C-1)-dimensional span
    simplex = np.eye(num_classes) * (delta_x / math.sqrt(2.0))
    simplex -= simplex.mean(axis=0)
    _, _, vt = np.linalg.svd(simplex)
    coords = simplex @ vt[: num_classes - 1].T
    points = np.zeros((num_classes, d))
    points[:, : num_classes - 1] = coords
    rotation = _haar_orthogonal(d, np.random.default_rng(seed))
    return points @ rotation.T


def feature_dim(n: int, num_classes: int, log=math.log) -> int:
    """max(C, ceil(n / log(n)^2)); natural log unless ``log`` says otherwise."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return max(num_classes, math.ceil(n / log(n) ** 2))


def sample(params: CsbmParams, seed) -> Graph:
    rng = np.random.default_rng(seed)
    n, C = params.n, params.num_classes
    y = rng.choice(C, size=n, p=params.prior)
    X = params.class_means[y] + params.sigma_x * rng.standard_normal((n, params.feature_dim))
    iu, ju = np.triu_indices(n, k=1)
    probs = params.affiliation[y[iu], y[ju]]
    hit = rng.random(len(iu)) < probs
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    return Graph.from_edges(n, edges, X, y, C)


def log_prior(params: CsbmParams) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(params.prior)


def feature_log_likelihood(params: CsbmParams, X) -> np.ndarray:
    """n x C matrix of log N(X_i; mu_c, sigma_x^2 I)."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    sq = ((X[:, None, :] - params.class_means[None, :, :]) ** 2).sum(axis=2)
    var = params.sigma_x**2
    return -0.5 * d * math.log(2 * math.pi * var) - sq / (2 * var)


def edge_log_tables(params: CsbmParams, mode: str = "correct", floor: bool = True):
    """(log p(A_ij=1 | c, c'), log p(A_ij=0 | c, c')) as C x C tables.

    In the misspecified model absent edges carry no likelihood term, so the
    second table is all zeros.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    F = params.affiliation
    with np.errstate(divide="ignore"):
        L1, L0 = np.log(F), np.log1p(-F)
    if mode == "misspecified":
        L0 = np.zeros_like(L0)
    if floor:
        L1, L0 = np.maximum(L1, LOG_FLOOR), np.maximum(L0, LOG_FLOOR)
    return L1, L0


def log_joint(params: CsbmParams, g: Graph, y, mode: str = "correct") -> float:
    """log p(A, X, y) under the CSBM; -inf for impossible configurations.

    ``mode="misspecified"`` keeps only the likelihood of present edges.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (g.n,):
        raise ValueError("y must assign a class to every node")
    L1, L0 = edge_log_tables(params, mode, floor=False)
    lp = log_prior(params)
    feat = feature_log_likelihood(params, g.features)
    nodes = np.arange(g.n)
    total = lp[y].sum() + feat[nodes, y].sum()

    edges = g.edge_list()
    edge_terms = L1[y[edges[:, 0]], y[edges[:, 1]]]
    total += edge_terms.sum() if edge_terms.size else 0.0
    if mode == "correct":
        # every unordered non-adjacent pair; counted via class-pair counts
        counts = np.bincount(y, minlength=params.num_classes).astype(np.float64)
        pairs = np.outer(counts, counts)
        np.fill_diagonal(pairs, counts * (counts - 1) / 2.0)
        edge_pairs = np.zeros_like(pairs)
        a, b = y[edges[:, 0]], y[edges[:, 1]]
        np.add.at(edge_pairs, (np.minimum(a, b), np.maximum(a, b)), 1.0)
        upper = np.triu(np.ones_like(pairs, dtype=bool))
        absent = np.where(upper, pairs - edge_pairs, 0.0)
        mask = absent > 0
        total += (absent[mask] * L0[mask]).sum()
    return float(total)

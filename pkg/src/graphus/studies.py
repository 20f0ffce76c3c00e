"""Batch studies behind ``graphus verify`` and ``graphus approx-error``."""
from __future__ import annotations

import numpy as np

from graphus.csbm import CsbmParams, build_affiliation, build_class_means, sample
from graphus.errors import InfeasibleParametersError
from graphus.exact import (
    DEFAULT_MAX_TERMS,
    ExactPosterior,
    LabelState,
    aleatoric_confidences,
    proportionality_checks,
    reveal_gain,
)
from graphus.mean_field import approximation_error, mean_field_marginals

__all__ = ["random_instance", "verify_instance", "run_verification", "feasible_degree", "approx_error_study"]


def random_instance(rng: np.random.Generator, n: int, num_classes: int):
    """A CSBM with random symmetric affiliation and prior, a sampled graph and a random observed set.

    At least one node stays unobserved.
    """
    C = num_classes
    F = rng.uniform(0.05, 0.95, size=(C, C))
    F = np.triu(F) + np.triu(F, 1).T
    prior = rng.dirichlet(np.ones(C))
    means = build_class_means(C, C, float(rng.uniform(0.5, 2.0)), seed=int(rng.integers(2**31)))
    params = CsbmParams(n, prior, F, means, float(rng.uniform(0.5, 1.5)))
    g = sample(params, int(rng.integers(2**31)))
    k = int(rng.integers(0, n))
    observed = np.sort(rng.choice(n, size=k, replace=False))
    return params, g, LabelState.from_observed(g.labels, observed, C)


def verify_instance(params, g, state, max_terms=DEFAULT_MAX_TERMS, rhs=reveal_gain) -> dict:
    """Largest |log u_epi - log rhs| over unobserved nodes plus the two proportionality CoVs."""
    y = g.labels
    post = ExactPosterior(params, g, state, max_terms=max_terms)
    log_total = post.log_marg - post.log_z
    alea = aleatoric_confidences(params, g, y)
    gaps = []
    for pos, i in enumerate(post.free):
        log_epi = np.log(alea[i, y[i]]) - log_total[pos, y[i]]
        gaps.append(abs(float(log_epi - np.log(rhs(params, g, state, i, max_terms=max_terms)))))
    props = proportionality_checks(params, g, state, max_terms=max_terms)
    return {
        "n": g.n,
        "num_classes": params.num_classes,
        "unobserved": len(post.free),
        "trivial": len(post.free) < 2,
        "max_abs_log_gap": max(gaps),
        "cov_total": props.cov_total,
        "cov_aleatoric": props.cov_aleatoric,
    }


def run_verification(cfg, max_terms=DEFAULT_MAX_TERMS, rhs=reveal_gain) -> dict:
    """Check the acquisition identity and both proportionality properties on random instances.

    ``rhs`` can be swapped out to confirm that a broken right-hand side fails.
    """
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for _ in range(cfg.instances):
        n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
        C = int(rng.choice(cfg.class_counts))
        rows.append(verify_instance(*random_instance(rng, n, C), max_terms=max_terms, rhs=rhs))
    max_gap = max(r["max_abs_log_gap"] for r in rows)
    max_cov = max(max(r["cov_total"], r["cov_aleatoric"]) for r in rows)
    ok = bool(max_gap < cfg.tolerance and max_cov < cfg.tolerance)
    return {"instances": rows, "max_abs_log_gap": max_gap, "max_cov": max_cov,
            "tolerance": cfg.tolerance, "pass": ok}


def feasible_degree(n: int, num_classes: int, expected_degree: float, snr: float) -> float:
    """``expected_degree``, lowered to the value where p = 1 if the graph is too small for it."""
    try:
        build_affiliation(n, num_classes, expected_degree, snr)
        return float(expected_degree)
    except InfeasibleParametersError:
        return (n - 1) * (snr + num_classes - 1) / (num_classes * snr)


def approx_error_study(cfg, mf_config=None, max_terms=DEFAULT_MAX_TERMS) -> list:
    """One row per (size, sample) with the median, mean and max marginal error, plus
    one pooled row per size (``sample`` = -1) over all samples of that size.

    Sample ``s`` of size ``n`` uses seed ``cfg.seed * 100 + s`` for the class
    means, the graph and the choice of observed nodes.
    """
    rows = []
    C = cfg.num_classes
    for n in cfg.sizes:
        deg = feasible_degree(n, C, cfg.expected_degree, cfg.structural_snr)
        pooled = []
        for s in range(cfg.samples):
            seed = cfg.seed * 100 + s
            params = CsbmParams.homogeneous(n, C, deg, cfg.structural_snr, cfg.feature_snr, means_seed=seed)
            g = sample(params, seed)
            rng = np.random.default_rng(seed)
            observed = []
            for c in range(C):
                members = np.flatnonzero(g.labels == c)
                k = min(cfg.observed_per_class, len(members))
                if k:
                    observed.extend(rng.choice(members, size=k, replace=False).tolist())
            state = LabelState.from_observed(g.labels, observed, C)
            gamma = mean_field_marginals(params, g, state, mf_config).gamma
            err = approximation_error(params, g, state, gamma, max_terms=max_terms)
            pooled.append(err["errors"])
            rows.append({"n": n, "sample": s, "median_err": err["median"], "mean_err": err["mean"],
                         "max_err": err["max"]})
        allerr = np.concatenate(pooled)
        rows.append({"n": n, "sample": -1, "median_err": float(np.median(allerr)),
                     "mean_err": float(allerr.mean()), "max_err": float(allerr.max())})
    return rows

"""Parsing and validation of the YAML/JSON config file shared by all subcommands.

Every parser rejects unknown keys and bad values with ``ConfigError`` before
any computation starts.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from graphus.acquisition import Strategy
from graphus.csbm import CsbmParams
from graphus.errors import ConfigError, InfeasibleParametersError
from graphus.exact import DEFAULT_MAX_TERMS
from graphus.harness import CsbmSource, DatasetSource, ExperimentConfig
from graphus.mean_field import MeanFieldConfig
from graphus.sgc import SgcConfig

__all__ = [
    "load_config",
    "parse_csbm",
    "parse_experiment",
    "GenerateConfig",
    "parse_generate",
    "VerifyConfig",
    "parse_verify",
    "ApproxErrorConfig",
    "parse_approx_error",
]

TOP_LEVEL = {
    "format_version", "source", "seed", "strategies", "budget", "seeds", "test_fraction",
    "evaluator", "inference", "misspecified_decoder", "baseline", "classifier", "mean_field",
    "oracle", "verify", "approx_error",
}
CSBM_KEYS = {"n", "num_classes", "expected_degree", "structural_snr", "feature_snr", "sigma_x",
             "feature_dim", "means_seed", "prior", "params"}
STRATEGY_KEYS = {"kind", "inference", "name", "teleport", "iterations", "candidate_limit", "n_jobs"}


def load_config(path) -> dict:
    """Read a YAML (or JSON, a YAML subset) file into a dict."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    unknown = set(data) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = data.get("format_version", 1)
    if version != 1:
        raise ConfigError(f"unsupported format_version {version!r}")
    return data


def _section(data, key, default=None) -> dict:
    sec = data.get(key, default if default is not None else {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be a mapping")
    return sec


def _build(cls, sec, where):
    allowed = {f.name for f in fields(cls)}
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {sorted(unknown)}")
    try:
        return cls(**sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}': {exc}") from exc


def parse_csbm(sec: dict) -> CsbmParams:
    """Either ``{params: {...}}`` with explicit parameters or the homogeneous recipe keys.

    Infeasible parameter combinations raise ``InfeasibleParametersError``.
    """
    unknown = set(sec) - CSBM_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in 'source.csbm': {sorted(unknown)}")
    if "params" in sec:
        if len(sec) > 1:
            raise ConfigError("'source.csbm.params' cannot be combined with recipe keys")
        try:
            return CsbmParams.from_dict(sec["params"])
        except InfeasibleParametersError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid 'source.csbm.params': {exc}") from exc
    required = ("n", "num_classes", "expected_degree", "structural_snr", "feature_snr")
    missing = [k for k in required if k not in sec]
    if missing:
        raise ConfigError(f"'source.csbm' is missing {missing}")
    try:
        return CsbmParams.homogeneous(
            int(sec["n"]), int(sec["num_classes"]), float(sec["expected_degree"]),
            float(sec["structural_snr"]), float(sec["feature_snr"]),
            sigma_x=float(sec.get("sigma_x", 1.0)), means_seed=int(sec.get("means_seed", 0)),
            dim=sec.get("feature_dim"), prior=sec.get("prior"),
        )
    except InfeasibleParametersError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'source.csbm': {exc}") from exc


def _parse_source(data):
    sec = _section(data, "source")
    if len(sec) != 1 or next(iter(sec)) not in ("csbm", "dataset"):
        raise ConfigError("'source' must have exactly one of 'csbm' or 'dataset'")
    if "csbm" in sec:
        return CsbmSource(parse_csbm(_section(sec, "csbm")))
    ds = _section(sec, "dataset")
    unknown = set(ds) - {"path", "normalize"}
    if unknown or "path" not in ds:
        raise ConfigError("'source.dataset' needs 'path' and accepts only 'normalize'")
    return DatasetSource(str(ds["path"]), bool(ds.get("normalize", True)))


def _parse_strategy(item) -> Strategy:
    if isinstance(item, str):
        item = {"kind": item}
    if not isinstance(item, dict) or "kind" not in item:
        raise ConfigError(f"strategy entries need a 'kind': {item!r}")
    unknown = set(item) - STRATEGY_KEYS
    if unknown:
        raise ConfigError(f"unknown strategy keys {sorted(unknown)} in {item!r}")
    options = {k: v for k, v in item.items() if k not in ("kind", "inference")}
    try:
        return Strategy(item["kind"], item.get("inference", "auto"), options)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_seeds(raw, offset):
    if isinstance(raw, dict):
        if set(raw) != {"splits", "runs"}:
            raise ConfigError("'seeds' mapping needs exactly 'splits' and 'runs'")
        pairs = list(itertools.product(range(int(raw["splits"])), range(int(raw["runs"]))))
    elif isinstance(raw, list):
        pairs = []
        for p in raw:
            if not isinstance(p, (list, tuple)) or len(p) != 2:
                raise ConfigError(f"seed pairs must be [split_seed, run_seed], got {p!r}")
            pairs.append((int(p[0]), int(p[1])))
    else:
        raise ConfigError("'seeds' must be a list of pairs or {splits, runs}")
    return [(a + offset, b + offset) for a, b in pairs]


def parse_experiment(data: dict, seed_offset: int = 0) -> ExperimentConfig:
    strategies = data.get("strategies")
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("'strategies' must be a non-empty list")
    oracle = _section(data, "oracle")
    if set(oracle) - {"max_terms"}:
        raise ConfigError("'oracle' accepts only 'max_terms'")
    budget = data.get("budget")
    try:
        return ExperimentConfig(
            source=_parse_source(data),
            strategies=[_parse_strategy(s) for s in strategies],
            seeds=_parse_seeds(data.get("seeds", {"splits": 5, "runs": 5}), seed_offset),
            budget=None if budget is None else int(budget),
            test_fraction=float(data.get("test_fraction", 0.2)),
            evaluator=str(data.get("evaluator", "auto")),
            inference=str(data.get("inference", "auto")),
            misspecified_decoder=bool(data.get("misspecified_decoder", False)),
            baseline=str(data.get("baseline", "random")),
            classifier=_build(SgcConfig, _section(data, "classifier"), "classifier"),
            mean_field=_build(MeanFieldConfig, _section(data, "mean_field"), "mean_field"),
            max_terms=int(oracle.get("max_terms", DEFAULT_MAX_TERMS)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class GenerateConfig:
    params: CsbmParams
    seed: int


def parse_generate(data: dict, seed_offset: int = 0) -> GenerateConfig:
    sec = _section(data, "source")
    if set(sec) != {"csbm"}:
        raise ConfigError("generate needs 'source.csbm'")
    if "seed" not in data:
        raise ConfigError("generate needs a top-level 'seed'")
    return GenerateConfig(parse_csbm(_section(sec, "csbm")), int(data["seed"]) + seed_offset)


@dataclass(frozen=True)
class VerifyConfig:
    """Random small CSBM instances on which the exact identities are checked."""

    instances: int = 50
    min_nodes: int = 4
    max_nodes: int = 8
    class_counts: tuple = (2, 3)
    seed: int = 0
    tolerance: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "class_counts", tuple(int(c) for c in self.class_counts))
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        if not 2 <= self.min_nodes <= self.max_nodes:
            raise ValueError("need 2 <= min_nodes <= max_nodes")
        if not self.class_counts or min(self.class_counts) < 2:
            raise ValueError("class_counts must be >= 2")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def parse_verify(data: dict, seed_offset: int = 0) -> VerifyConfig:
    cfg = _build(VerifyConfig, _section(data, "verify"), "verify")
    return VerifyConfig(cfg.instances, cfg.min_nodes, cfg.max_nodes, cfg.class_counts,
                        cfg.seed + seed_offset, cfg.tolerance)


@dataclass(frozen=True)
class ApproxErrorConfig:
    """Mean-field vs exact marginals on small homogeneous CSBMs.

    ``expected_degree`` is clipped to the largest value with p <= 1 when a
    graph is too small to support it.
    """

    sizes: tuple = (6, 8, 10, 12)
    samples: int = 5
    num_classes: int = 4
    expected_degree: float = 4.0
    structural_snr: float = 2.0
    feature_snr: float = 1.0
    observed_per_class: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.observed_per_class < 0:
            raise ValueError("observed_per_class must be >= 0")
        if any(n < self.num_classes * max(self.observed_per_class, 1) for n in self.sizes):
            raise ValueError("every size must leave room for the observed nodes")


def parse_approx_error(data: dict, seed_offset: int = 0):
    cfg = _build(ApproxErrorConfig, _section(data, "approx_error"), "approx_error")
    mf = _build(MeanFieldConfig, _section(data, "mean_field"), "mean_field")
    oracle = _section(data, "oracle")
    max_terms = int(oracle.get("max_terms", DEFAULT_MAX_TERMS))
    return (ApproxErrorConfig(cfg.sizes, cfg.samples, cfg.num_classes, cfg.expected_degree,
                              cfg.structural_snr, cfg.feature_snr, cfg.observed_per_class,
                              cfg.seed + seed_offset), mf, max_terms)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"

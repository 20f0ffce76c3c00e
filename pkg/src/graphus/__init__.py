"""Ground-truth uncertainty and uncertainty-sampling active learning on contextual SBMs."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("graphus")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from graphus.acquisition import Strategy, next_query
from graphus.csbm import CsbmParams, log_joint, sample
from graphus.errors import (
    ConfigError,
    DatasetError,
    EnumerationLimitError,
    GraphusError,
    InfeasibleParametersError,
)
from graphus.exact import ExactPosterior, LabelState, reveal_gain
from graphus.graph import Graph, load_dataset, save_dataset
from graphus.harness import ExperimentConfig, RunRecord, run_al
from graphus.kernels import BACKEND
from graphus.mean_field import MeanFieldConfig, mean_field_marginals
from graphus.sgc import SgcConfig, SgcModel

__all__ = [
    "BACKEND",
    "ConfigError",
    "CsbmParams",
    "DatasetError",
    "EnumerationLimitError",
    "ExactPosterior",
    "ExperimentConfig",
    "Graph",
    "GraphusError",
    "InfeasibleParametersError",
    "LabelState",
    "MeanFieldConfig",
    "RunRecord",
    "SgcConfig",
    "SgcModel",
    "Strategy",
    "load_dataset",
    "log_joint",
    "mean_field_marginals",
    "next_query",
    "run_al",
    "sample",
    "save_dataset",
    "reveal_gain",
]

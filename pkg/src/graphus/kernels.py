"""Kernel backend selection.

The compiled extension is used when it is importable; setting
``GRAPHUS_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from graphus import _pykernels

BACKEND = "python"
enumerate_log_marginals = _pykernels.enumerate_log_marginals
mean_field_sweep = _pykernels.mean_field_sweep

if not os.environ.get("GRAPHUS_PURE_PYTHON"):
    try:
        from graphus import _ckernels
    except ImportError:
        _ckernels = None
    if _ckernels is not None:
        BACKEND = "cython"
        enumerate_log_marginals = _ckernels.enumerate_log_marginals
        mean_field_sweep = _ckernels.mean_field_sweep

__all__ = ["BACKEND", "enumerate_log_marginals", "mean_field_sweep"]

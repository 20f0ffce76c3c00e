"""Log-space helpers shared by the exact, mean-field and pseudo-label code."""
import numpy as np
from scipy.special import logsumexp

# just above the log of the smallest positive double
LOG_FLOOR = -745.0

__all__ = ["LOG_FLOOR", "floored_log", "log_normalize", "logsumexp", "argmax_lowest"]


def floored_log(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.log(p)
    return np.maximum(out, LOG_FLOOR)


def log_normalize(logits, axis=-1):
    """Return log-probabilities normalized along ``axis``."""
    logits = np.maximum(np.asarray(logits, dtype=np.float64), LOG_FLOOR)
    return logits - logsumexp(logits, axis=axis, keepdims=True)


def argmax_lowest(scores, axis=-1):
    # np.argmax already returns the first maximal index
    return np.argmax(scores, axis=axis)

"""Reference numpy implementations of the hot loops.

These define the semantics; ``_ckernels.pyx`` must agree with them to
floating-point rounding.
"""
import numpy as np
from scipy.special import logsumexp

_CHUNK = 1 << 15


def enumerate_log_marginals(unary, pair):
    """Sum exp(score) over all C**m assignments of the free nodes.

    ``score(y) = sum_u unary[u, y_u] + sum_{u<v} pair[u, v, y_u, y_v]``.
    Returns ``(log_z, log_marg)`` where ``log_marg[u, c]`` restricts the sum
    to assignments with ``y_u = c``.
    """
    unary = np.asarray(unary, dtype=np.float64)
    pair = np.asarray(pair, dtype=np.float64)
    m, C = unary.shape
    log_marg = np.full((m, C), -np.inf)
    if m == 0:
        return 0.0, log_marg
    total = C**m
    radix = C ** np.arange(m, dtype=np.int64)
    upper = [(u, v) for u in range(m) for v in range(u + 1, m)]
    z_parts = []
    marg_parts = [[[] for _ in range(C)] for _ in range(m)]
    for start in range(0, total, _CHUNK):
        t = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        y = (t[:, None] // radix[None, :]) % C
        scores = np.zeros(len(t))
        for u in range(m):
            scores += unary[u, y[:, u]]
        for u, v in upper:
            scores += pair[u, v, y[:, u], y[:, v]]
        z_parts.append(logsumexp(scores))
        for u in range(m):
            for c in range(C):
                sel = scores[y[:, u] == c]
                if sel.size:
                    marg_parts[u][c].append(logsumexp(sel))
    for u in range(m):
        for c in range(C):
            if marg_parts[u][c]:
                log_marg[u, c] = logsumexp(marg_parts[u][c])
    return float(logsumexp(z_parts)), log_marg


def mean_field_sweep(gamma, total, order, indptr, indices, L1, L0, unary):
    """One in-place sequential coordinate-ascent sweep over ``order``.

    ``total`` holds the column sums of ``gamma`` and is kept in sync.
    Returns the largest absolute change of any entry.
    """
    change = 0.0
    for i in order:
        nbrs = indices[indptr[i]:indptr[i + 1]]
        nb = gamma[nbrs].sum(axis=0)
        rest = total - gamma[i] - nb
        logits = unary[i] + L1 @ nb + L0 @ rest
        logits = np.exp(logits - logits.max())
        new = logits / logits.sum()
        diff = new - gamma[i]
        change = max(change, float(np.abs(diff).max()))
        total += diff
        gamma[i] = new
    return change

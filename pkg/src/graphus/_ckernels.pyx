# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are defined by graphus._pykernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY, fabs

cnp.import_array()


cdef inline void _lse_push(double* mx, double* acc, double s) noexcept nogil:
    if s > mx[0]:
        acc[0] = acc[0] * exp(mx[0] - s) + 1.0
        mx[0] = s
    else:
        acc[0] += exp(s - mx[0])


def enumerate_log_marginals(const double[:, ::1] unary, const double[:, :, :, ::1] pair):
    """Stream over all C**m label assignments of the free nodes.

    Returns (log_z, log_marg) with log_marg[u, c] = log of the summed
    unnormalized mass of assignments where node u takes class c.
    """
    cdef Py_ssize_t m = unary.shape[0]
    cdef Py_ssize_t C = unary.shape[1]
    out = np.full((m, C), -np.inf)
    if m == 0:
        return 0.0, out
    cdef double[:, ::1] mx = np.full((m, C), -np.inf)
    cdef double[:, ::1] acc = np.zeros((m, C))
    cdef double[::1] partial = np.zeros(m + 1)
    cdef long[::1] y = np.zeros(m, dtype=np.int64)
    cdef double zmx = -INFINITY, zacc = 0.0
    cdef Py_ssize_t j, k, u, v
    cdef double s

    with nogil:
        # partial[j] = score of digits j..m-1 (unary + pairs among them)
        for j in range(m - 1, -1, -1):
            s = partial[j + 1] + unary[j, 0]
            for v in range(j + 1, m):
                s += pair[j, v, 0, 0]
            partial[j] = s
        while True:
            s = partial[0]
            _lse_push(&zmx, &zacc, s)
            for u in range(m):
                _lse_push(&mx[u, y[u]], &acc[u, y[u]], s)
            k = 0
            while k < m and y[k] == C - 1:
                y[k] = 0
                k += 1
            if k == m:
                break
            y[k] += 1
            for j in range(k, -1, -1):
                s = partial[j + 1] + unary[j, y[j]]
                for v in range(j + 1, m):
                    s += pair[j, v, y[j], y[v]]
                partial[j] = s

    cdef double[:, ::1] o = out
    for u in range(m):
        for k in range(C):
            if acc[u, k] > 0:
                o[u, k] = mx[u, k] + log(acc[u, k])
    return zmx + log(zacc), out


def mean_field_sweep(double[:, ::1] gamma, double[::1] total, const long[::1] order,
                     const int[::1] indptr, const int[::1] indices,
                     const double[:, ::1] L1, const double[:, ::1] L0,
                     const double[:, ::1] unary):
    """One in-place sequential coordinate-ascent sweep; returns the max |change|."""
    cdef Py_ssize_t C = gamma.shape[1]
    cdef Py_ssize_t t, p, c, cc, i, j
    cdef double[::1] nb = np.empty(C)
    cdef double[::1] rest = np.empty(C)
    cdef double[::1] logits = np.empty(C)
    cdef double best, z, val, change = 0.0, diff

    with nogil:
        for t in range(order.shape[0]):
            i = order[t]
            for c in range(C):
                nb[c] = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                for c in range(C):
                    nb[c] += gamma[j, c]
            for c in range(C):
                rest[c] = total[c] - gamma[i, c] - nb[c]
            best = -INFINITY
            for c in range(C):
                val = unary[i, c]
                for cc in range(C):
                    val += L1[c, cc] * nb[cc] + L0[c, cc] * rest[cc]
                logits[c] = val
                if val > best:
                    best = val
            z = 0.0
            for c in range(C):
                logits[c] = exp(logits[c] - best)
                z += logits[c]
            for c in range(C):
                val = logits[c] / z
                diff = val - gamma[i, c]
                if fabs(diff) > change:
                    change = fabs(diff)
                total[c] += diff
                gamma[i, c] = val
    return change

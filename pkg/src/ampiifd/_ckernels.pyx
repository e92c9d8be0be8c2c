# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: batched tridiagonal solves and best-bin-first search.

Signatures and results mirror ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


def solve_tridiagonal(const double[:, ::1] lower, const double[:, ::1] diag,
                      const double[:, ::1] upper, const double[:, ::1] rhs):
    cdef Py_ssize_t m = diag.shape[0]
    cdef Py_ssize_t n = diag.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] x = out
    cdef double *cp = <double *> malloc(n * sizeof(double))
    cdef Py_ssize_t r, i
    cdef double denom
    if cp == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(m):
                denom = diag[r, 0]
                cp[0] = upper[r, 0] / denom
                x[r, 0] = rhs[r, 0] / denom
                for i in range(1, n):
                    denom = diag[r, i] - lower[r, i] * cp[i - 1]
                    cp[i] = upper[r, i] / denom
                    x[r, i] = (rhs[r, i] - lower[r, i] * x[r, i - 1]) / denom
                for i in range(n - 2, -1, -1):
                    x[r, i] = x[r, i] - cp[i] * x[r, i + 1]
    finally:
        free(cp)
    return out


cdef inline bint _before(double ka, Py_ssize_t va, double kb, Py_ssize_t vb) noexcept nogil:
    # (key, node) lexicographic order, the same order heapq gives tuples
    return ka < kb or (ka == kb and va < vb)


cdef inline void _heap_push(double *keys, Py_ssize_t *vals, Py_ssize_t *size,
                            double key, Py_ssize_t val) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if not _before(key, val, keys[parent], vals[parent]):
            break
        keys[i] = keys[parent]
        vals[i] = vals[parent]
        i = parent
    keys[i] = key
    vals[i] = val


cdef inline void _heap_pop(double *keys, Py_ssize_t *vals, Py_ssize_t *size) noexcept nogil:
    cdef Py_ssize_t n = size[0] - 1
    cdef double key = keys[n]
    cdef Py_ssize_t val = vals[n]
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    size[0] = n
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and _before(keys[child + 1], vals[child + 1], keys[child], vals[child]):
            child += 1
        if not _before(keys[child], vals[child], key, val):
            break
        keys[i] = keys[child]
        vals[i] = vals[child]
        i = child
    if n > 0:
        keys[i] = key
        vals[i] = val


def bbf_knn2(const double[:, ::1] data, const cnp.int64_t[::1] split_dim,
             const double[::1] split_val, const cnp.int64_t[::1] left,
             const cnp.int64_t[::1] right, const cnp.int64_t[::1] start,
             const cnp.int64_t[::1] end, const double[:, ::1] queries, long max_checks):
    cdef Py_ssize_t m = queries.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t n_nodes = split_dim.shape[0]
    idx_out = np.full((m, 2), -1, dtype=np.int64)
    dist_out = np.full((m, 2), np.inf, dtype=np.float64)
    checks_out = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = idx_out
    cdef double[:, ::1] dist = dist_out
    cdef cnp.int64_t[::1] nchecks = checks_out
    cdef double *keys = <double *> malloc((n_nodes + 1) * sizeof(double))
    cdef Py_ssize_t *vals = <Py_ssize_t *> malloc((n_nodes + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t q, node, near, far, p, k, size, b1, b2
    cdef long checks
    cdef double bound, diff, fb, d2, t, best1, best2
    if keys == NULL or vals == NULL:
        free(keys)
        free(vals)
        raise MemoryError()
    try:
        with nogil:
            for q in range(m):
                best1 = INFINITY
                best2 = INFINITY
                b1 = -1
                b2 = -1
                checks = 0
                size = 0
                _heap_push(keys, vals, &size, 0.0, 0)
                while size > 0 and checks < max_checks:
                    bound = keys[0]
                    node = vals[0]
                    _heap_pop(keys, vals, &size)
                    if bound >= best2:
                        break
                    while split_dim[node] >= 0:
                        diff = queries[q, split_dim[node]] - split_val[node]
                        if diff <= 0:
                            near = left[node]
                            far = right[node]
                        else:
                            near = right[node]
                            far = left[node]
                        fb = diff * diff
                        if fb < bound:
                            fb = bound
                        if fb < best2:
                            _heap_push(keys, vals, &size, fb, far)
                        node = near
                    checks += 1
                    for p in range(start[node], end[node]):
                        d2 = 0.0
                        for k in range(d):
                            t = queries[q, k] - data[p, k]
                            d2 += t * t
                        if d2 < best1:
                            best2 = best1
                            b2 = b1
                            best1 = d2
                            b1 = p
                        elif d2 < best2:
                            best2 = d2
                            b2 = p
                idx[q, 0] = b1
                idx[q, 1] = b2
                dist[q, 0] = sqrt(best1)
                dist[q, 1] = sqrt(best2)
                nchecks[q] = checks
    finally:
        free(keys)
        free(vals)
    return idx_out, dist_out, checks_out

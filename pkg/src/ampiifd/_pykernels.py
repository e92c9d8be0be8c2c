"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import heapq
import math

import numpy as np


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve one tridiagonal system per row with the Thomas algorithm.

    ``lower[:, 0]`` and ``upper[:, -1]`` are ignored.  The sweep runs along
    the columns and is vectorized across the independent rows.
    """
    m, n = diag.shape
    cp = np.empty((m, n))
    x = np.empty((m, n))
    denom = diag[:, 0].copy()
    cp[:, 0] = upper[:, 0] / denom
    x[:, 0] = rhs[:, 0] / denom
    for i in range(1, n):
        denom = diag[:, i] - lower[:, i] * cp[:, i - 1]
        cp[:, i] = upper[:, i] / denom
        x[:, i] = (rhs[:, i] - lower[:, i] * x[:, i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[:, i] = x[:, i] - cp[:, i] * x[:, i + 1]
    return x


def bbf_knn2(data, split_dim, split_val, left, right, start, end, queries, max_checks):
    m = queries.shape[0]
    idx = np.full((m, 2), -1, dtype=np.int64)
    dist = np.full((m, 2), np.inf)
    nchecks = np.zeros(m, dtype=np.int64)
    for q in range(m):
        query = queries[q]
        best1 = best2 = math.inf
        b1 = b2 = -1
        checks = 0
        heap = [(0.0, 0)]
        while heap and checks < max_checks:
            bound, node = heapq.heappop(heap)
            if bound >= best2:
                break
            while split_dim[node] >= 0:
                diff = query[split_dim[node]] - split_val[node]
                if diff <= 0:
                    near, far = left[node], right[node]
                else:
                    near, far = right[node], left[node]
                fb = max(diff * diff, bound)
                if fb < best2:
                    heapq.heappush(heap, (fb, far))
                node = near
            checks += 1
            s, e = start[node], end[node]
            diffs = data[s:e] - query
            d2s = np.einsum("ij,ij->i", diffs, diffs)
            for off, d2 in enumerate(d2s.tolist()):
                if d2 < best1:
                    best2, b2 = best1, b1
                    best1, b1 = d2, s + off
                elif d2 < best2:
                    best2, b2 = d2, s + off
        idx[q] = b1, b2
        dist[q] = math.sqrt(best1), math.sqrt(best2)
        nchecks[q] = checks
    return idx, dist, nchecks

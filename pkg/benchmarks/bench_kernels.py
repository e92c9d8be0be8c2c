"""Compare the compiled and pure-Python kernels on representative inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from ampiifd import _pykernels
from ampiifd.matching import build_index
from ampiifd.scale_space import _axis_system

try:
    from ampiifd import _ckernels
except ImportError:
    _ckernels = None


def thomas_case(rng, rows=512, n=512):
    lower, diag, upper = _axis_system(rng.random((rows, n)), 2.5)
    return lower, diag, upper, rng.random((rows, n))


def bbf_case(rng, n_data=3000, n_query=1000):
    data = rng.normal(size=(n_data, 128))
    data /= np.linalg.norm(data, axis=1, keepdims=True)
    queries = rng.normal(size=(n_query, 128))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    idx = build_index(data)
    return (idx.data, idx.split_dim, idx.split_val, idx.left, idx.right, idx.start, idx.end,
            np.ascontiguousarray(queries), 200)


def best_of(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ns = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = [("thomas 512 systems x 512", "solve_tridiagonal", thomas_case(rng)),
             ("bbf 1000 queries / 3000 x 128, 200 checks", "bbf_knn2", bbf_case(rng))]
    print(f"{'kernel':44s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for label, name, args in cases:
        t_py = best_of(getattr(_pykernels, name), args, ns.repeat)
        if _ckernels is None:
            print(f"{label:44s} {t_py:10.4f} {'n/a':>10s} {'n/a':>8s}")
            continue
        t_c = best_of(getattr(_ckernels, name), args, ns.repeat)
        print(f"{label:44s} {t_py:10.4f} {t_c:10.4f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()

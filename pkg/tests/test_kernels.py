import os
import subprocess
import sys

import numpy as np
import pytest

from ampiifd import _pykernels, kernels
from ampiifd.matching import build_index
from ampiifd.scale_space import _axis_system

ckernels = pytest.importorskip("ampiifd._ckernels", reason="compiled extension not built")


def tridiagonal_system(rng, rows=7, n=33):
    cond = rng.random((rows, n))
    lower, diag, upper = _axis_system(cond, rng.uniform(0.1, 20))
    return lower, diag, upper, rng.random((rows, n))


def test_thomas_against_dense(rng):
    lower, diag, upper, rhs = tridiagonal_system(rng)
    for impl in (_pykernels, ckernels):
        out = impl.solve_tridiagonal(lower, diag, upper, rhs)
        for r in range(rhs.shape[0]):
            a = np.diag(diag[r]) + np.diag(lower[r, 1:], -1) + np.diag(upper[r, :-1], 1)
            np.testing.assert_allclose(out[r], np.linalg.solve(a, rhs[r]), atol=1e-12)


def test_thomas_backends_agree(rng):
    for n in (1, 2, 5, 200):
        args = tridiagonal_system(rng, 4, n)
        np.testing.assert_allclose(ckernels.solve_tridiagonal(*args),
                                   _pykernels.solve_tridiagonal(*args), atol=1e-13, rtol=0)


@pytest.mark.parametrize("max_checks", [1, 3, 10, 10 ** 6])
def test_bbf_backends_agree(rng, max_checks):
    data = rng.normal(size=(400, 128))
    queries = rng.normal(size=(60, 128))
    idx = build_index(data)
    args = (idx.data, idx.split_dim, idx.split_val, idx.left, idx.right, idx.start, idx.end,
            np.ascontiguousarray(queries))
    ci, cd, cc = ckernels.bbf_knn2(*args, max_checks)
    pi, pd, pc = _pykernels.bbf_knn2(*args, max_checks)
    np.testing.assert_array_equal(ci, pi)
    np.testing.assert_allclose(cd, pd, atol=1e-12, rtol=0)
    np.testing.assert_array_equal(cc, pc)


def test_backend_selected():
    assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, AMPIIFD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ampiifd.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

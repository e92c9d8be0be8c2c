"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``AMPIIFD_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("AMPIIFD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

solve_tridiagonal = _impl.solve_tridiagonal
bbf_knn2 = _impl.bbf_knn2

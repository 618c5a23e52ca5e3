"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``LOCALFLOW_PURE_PYTHON=1`` to force the fallback.
"""
import os

from localflow import _pykernels

if os.environ.get("LOCALFLOW_PURE_PYTHON"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from localflow import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]

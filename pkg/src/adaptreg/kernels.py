"""Kernel dispatch: the compiled extension when built, numpy otherwise.

Set ``ADAPTREG_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("ADAPTREG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

nvb_closure = _impl.nvb_closure
nvb_split = _impl.nvb_split
p1_local = _impl.p1_local

__all__ = ["BACKEND", "nvb_closure", "nvb_split", "p1_local"]

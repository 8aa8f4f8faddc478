"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``WHISKER_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
split_flow = _kernels_py.split_flow

if os.environ.get("WHISKER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        split_flow = _compiled.split_flow
        BACKEND = "cython"

__all__ = ["BACKEND", "split_flow"]

"""Kernel selection: compiled dual active set if built, numpy otherwise.

Set ``COOPCBF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _dual_py
from ._dual_py import INFEASIBLE, MAX_ITER, NOT_CONVEX, OPTIMAL  # noqa: F401

python_dual_active_set = _dual_py.dual_active_set
compiled_dual_active_set = None

try:
    from ._dual_ext import dual_active_set as compiled_dual_active_set
except ImportError:  # extension not built
    pass

if compiled_dual_active_set is not None and os.environ.get("COOPCBF_PURE_PYTHON", "") in ("", "0"):
    dual_active_set = compiled_dual_active_set
    BACKEND = "cython"
else:
    dual_active_set = python_dual_active_set
    BACKEND = "python"

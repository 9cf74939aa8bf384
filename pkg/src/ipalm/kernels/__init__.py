"""Hot inner loops, compiled when possible.

The Cython extension ``_native`` is used if it was built; otherwise (or when
``IPALM_PURE_PYTHON=1`` is set) the numpy/Python ``_fallback`` is used.
Both expose the same functions with the same results.
"""
import os

from . import _fallback

fallback = _fallback
native = None

if os.environ.get("IPALM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _native as native
    except ImportError:
        _impl = _fallback
    else:
        _impl = native

BACKEND = _impl.BACKEND
scatter_add_rows = _impl.scatter_add_rows
merge_pair = _impl.merge_pair
MergeTable = _impl.MergeTable
pair_key = _fallback.pair_key

__all__ = ["BACKEND", "scatter_add_rows", "merge_pair", "MergeTable", "pair_key", "native", "fallback"]

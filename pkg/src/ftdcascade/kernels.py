"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported. Set ``FTDCASCADE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("FTDCASCADE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

smo_solve = _impl.smo_solve
nearest_triangle_distance = _impl.nearest_triangle_distance
susan_sums = _impl.susan_sums

__all__ = ["BACKEND", "smo_solve", "nearest_triangle_distance", "susan_sums"]

"""Simulation recursions: compiled extension when built, numpy otherwise.

Set ``FCNAR_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _fallback

if os.environ.get("FCNAR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

network_recursion = _impl.network_recursion
spline_recursion = _impl.spline_recursion

__all__ = ["BACKEND", "network_recursion", "spline_recursion", "_fallback"]

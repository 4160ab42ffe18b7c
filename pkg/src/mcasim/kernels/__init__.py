"""Hot inner loops, compiled when possible.

``BACKEND`` is ``"cython"`` when the extension imported and ``"numpy"``
otherwise.  Setting ``MCASIM_PURE_PYTHON=1`` forces the NumPy fallback.
Both backends return identical arrays for identical inputs.
"""
import os

from . import _fallback as fallback

compiled = None
if not os.environ.get("MCASIM_PURE_PYTHON"):
    try:
        from . import _core as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "numpy"

dup_isolated = _impl.dup_isolated
first_success = _impl.first_success

__all__ = ["BACKEND", "compiled", "fallback", "dup_isolated", "first_success"]

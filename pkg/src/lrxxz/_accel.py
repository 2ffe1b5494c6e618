"""Numba switch.

Hot kernels are written twice: a numba ``@njit`` version and a plain numpy
version with identical outputs. ``LRXXZ_DISABLE_NUMBA=1`` (or a missing numba
install) selects the numpy path. The flag is read once at import time.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("LRXXZ_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by LRXXZ_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``, or an identity decorator."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

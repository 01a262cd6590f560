"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays. When numba is
importable and ``PACOMM_BACKEND`` is not ``numpy`` they are compiled with
``numba.njit``; otherwise the same source (or a vectorized numpy twin, where
one exists) runs in the interpreter. Both paths consume identical pre-drawn
random numbers, so results do not depend on the backend.
"""

from __future__ import annotations

import os

_requested = os.environ.get("PACOMM_BACKEND", "numba").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

USE_NUMBA = _numba is not None and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)


def select(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl

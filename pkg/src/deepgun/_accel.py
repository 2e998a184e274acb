"""Numba switch.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version.  Set ``DEEPGUN_DISABLE_NUMBA=1`` to force the numpy path
(also used automatically when numba cannot be imported).
"""

import os

_FLAG = os.environ.get("DEEPGUN_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")

NJIT_OPTIONS = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


def njit(func):
    """Compile ``func`` with numba if available, otherwise return it unchanged."""
    if numba is None:
        return func
    return numba.njit(**NJIT_OPTIONS)(func)

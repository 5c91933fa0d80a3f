"""Optional numba acceleration.

Set ``CSP_STREAM_LAB_DISABLE_JIT=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``)
to run every kernel through its pure-numpy twin instead.
"""

from __future__ import annotations

import os

_FLAG = "CSP_STREAM_LAB_DISABLE_JIT"


def _env_disabled() -> bool:
    for name in (_FLAG, "NUMBA_DISABLE_JIT"):
        if os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on"):
            return True
    return False


try:
    if _env_disabled():
        raise ImportError("jit disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if _njit is None:
        return func
    return _njit(cache=True, nogil=True)(func)

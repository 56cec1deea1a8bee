"""JIT backend selection.

Kernels are compiled with numba when it is importable, unless the environment
variable ``TUBELINK_DISABLE_JIT`` is set to a truthy value, in which case the
pure-numpy implementations are used. The flag is read once at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
JIT_DISABLED = os.environ.get("TUBELINK_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}
USE_JIT = HAVE_NUMBA and not JIT_DISABLED


def njit(fn):
    """``numba.njit(cache=True, nogil=True)`` if numba is present, else identity."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend_name():
    return "numba" if USE_JIT else "numpy"

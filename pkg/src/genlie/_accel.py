"""Optional numba acceleration.

Set ``GENLIE_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used automatically.
"""
import os

_DISABLED = os.environ.get("GENLIE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(fn):
    """``numba.njit(cache=False)`` when numba is active, otherwise None.

    Callers keep the numpy twin of every kernel and dispatch on the result.
    """
    if not HAVE_NUMBA:
        return None
    return _njit(cache=False, nogil=True)(fn)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

"""Optional numba acceleration.

Set ``HIERGRAPH_DISABLE_NUMBA=1`` to run every kernel as plain Python over
numpy arrays. Both paths share one source, so results are identical.
"""
import os

_DISABLED = os.environ.get("HIERGRAPH_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(func):
    """Compile ``func`` with numba when available; return it unchanged otherwise."""
    if HAS_NUMBA:
        return numba.njit(cache=False)(func)
    return func

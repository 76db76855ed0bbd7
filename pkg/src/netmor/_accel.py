"""JIT switch for the numeric kernels.

Set ``NETMOR_DISABLE_NUMBA=1`` to force the vectorized numpy code paths.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_flag = os.environ.get("NETMOR_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _flag not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)

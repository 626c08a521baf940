"""Numba availability switch.

Set ``TWASIM_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is installed.
"""
import os

_FLAG = os.environ.get("TWASIM_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = HAVE_NUMBA and not DISABLED

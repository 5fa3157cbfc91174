"""Numba switch.

Set ``RELIT_NUMBA=0`` to force the pure-numpy kernels (also used when numba
is not importable). The flag is read once at import time.
"""

import os
import warnings

_flag = os.environ.get("RELIT_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    _njit = None

USE_NUMBA = HAVE_NUMBA and _requested

if _requested and not HAVE_NUMBA:  # pragma: no cover
    warnings.warn("numba not available; falling back to numpy kernels", RuntimeWarning)


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f

"""Numba toggle.

Set ``SELFSELECT_DISABLE_NUMBA=1`` to force the vectorised numpy kernels.
The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("SELFSELECT_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    Kernels decorated with this are always compiled when numba exists, so the
    benchmark can compare both backends in one process; ``NUMBA_ENABLED``
    only decides which backend the public dispatchers use.
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

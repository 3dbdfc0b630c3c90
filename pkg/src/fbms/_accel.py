"""Optional numba acceleration.

Set ``FBMS_NO_NUMBA=1`` to force the pure-numpy/python path.  When numba is
missing the decorators become no-ops, so every kernel stays importable.
"""
import os

USE_NUMBA = os.environ.get("FBMS_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

try:
    if not USE_NUMBA:
        raise ImportError
    from numba import njit, prange  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

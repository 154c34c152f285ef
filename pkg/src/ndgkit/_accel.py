"""Backend selection for the hot kernels.

Kernels are compiled with numba when it is importable, unless the
environment variable ``NDGKIT_BACKEND`` is set to ``numpy``.  The numpy
fallback is always importable and is what runs when numba is missing.
"""

import os
import warnings

_requested = os.environ.get("NDGKIT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown NDGKIT_BACKEND={_requested!r}, using numpy")
    _requested = "numpy"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise the identity decorator.

    The decorated function is compiled regardless of ``USE_NUMBA`` so that
    both paths can be benchmarked side by side in one process.
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(f):
        return f

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

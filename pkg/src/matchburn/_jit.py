"""JIT switch for the numeric kernels.

Kernels are compiled with ``numba.njit`` when numba is importable and the
environment variable ``MATCHBURN_NUMBA`` is not set to ``0``. Otherwise the
same source runs under the interpreter on plain numpy arrays, which is slow
but dependency-free and handy when debugging a kernel.
"""

import os

_FLAG = os.environ.get("MATCHBURN_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

_SETTINGS = {"nogil": True, "cache": True}


def jit(func):
    """Compile ``func`` in nopython mode if numba is enabled."""
    if HAVE_NUMBA:
        return numba.njit(**_SETTINGS)(func)
    return func


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

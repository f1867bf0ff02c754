"""Backend selection for the hot loops.

Kernels are compiled with numba when it is importable and the environment
variable ``QTRACK_NO_NUMBA`` is unset (or ``0``). Otherwise every kernel
falls back to a numpy implementation that loops over time and vectorizes
across the ensemble axis.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_FLAG = os.environ.get("QTRACK_NO_NUMBA", "").strip().lower()
_backend = "numpy" if (numba is None or _FLAG not in ("", "0", "false", "no")) else "numba"


def njit(func):
    """``numba.njit(cache=True, nogil=True)`` when numba is available, identity otherwise."""
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def get_backend():
    return _backend


def set_backend(name):
    """Switch between ``"numba"`` and ``"numpy"`` at runtime; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous

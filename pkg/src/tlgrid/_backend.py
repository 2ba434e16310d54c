"""Kernel backend selection.

Two interchangeable kernel sets exist: compiled loops (``numba``) and a
vectorized pure-numpy path (``numpy``).  The default comes from the
``TLGRID_BACKEND`` environment variable and falls back to ``numpy`` when
numba cannot be imported.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def _initial():
    name = os.environ.get("TLGRID_BACKEND", "").strip().lower()
    if not name:
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in BACKENDS:
        raise ValueError(f"TLGRID_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("TLGRID_BACKEND=numba but numba is not installed")
    return name


_current = _initial()


def get_backend():
    return _current


def set_backend(name):
    """Switch the active kernel set; returns the previous name."""
    global _current
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("numba is not installed")
    prev, _current = _current, name
    return prev


def kernels():
    """Module implementing the active backend's kernels."""
    if _current == "numba":
        from .kernels import loops

        return loops
    from .kernels import vectorized

    return vectorized


def default_threads():
    try:
        n = int(os.environ.get("TLGRID_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)

"""Backend switch for the hot numerical kernels.

Every hot loop in the package exists twice: a numba ``@njit`` version and a
pure-numpy fallback.  The active backend is read from the environment variable
``SCENTREE_BACKEND`` (``numba`` or ``numpy``) at import time and can be changed
at runtime with :func:`set_backend` or the :func:`backend` context manager.
When numba is not importable the numpy path is always used.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba

    HAVE_NUMBA = True
    # an outdated system TBB only produces a warning; prefer OpenMP
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")

_env = os.environ.get("SCENTREE_BACKEND", "numba").strip().lower() or "numba"
if _env not in BACKENDS:
    raise ImportError(f"SCENTREE_BACKEND must be one of {BACKENDS}, got {_env!r}")
_backend = _env if HAVE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` that degrades to the identity decorator without numba."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


prange = numba.prange if HAVE_NUMBA else range


def get_backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    name = name.lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def backend(name: str):
    """Temporarily switch the kernel backend."""
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def set_threads(n: int | None) -> int:
    """Cap numba's worker threads; results never depend on this value."""
    if not HAVE_NUMBA:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if n is None or n <= 0 else min(int(n), limit)
    numba.set_num_threads(n)
    return n

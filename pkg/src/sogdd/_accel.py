"""Backend selection for the hot kernels.

The compiled path uses numba. Setting ``SOGDD_BACKEND=numpy`` in the
environment (or running without numba installed) selects the pure-numpy
fallback. Both paths implement the same arithmetic in the same order.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
    # prefer OpenMP; probing an outdated TBB only produces a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_ENV_FLAG = "SOGDD_BACKEND"
_VALID = ("numba", "numpy")


def _default_backend():
    requested = os.environ.get(_ENV_FLAG, "").strip().lower()
    if requested and requested not in _VALID:
        raise ValueError(f"{_ENV_FLAG} must be one of {_VALID}, got {requested!r}")
    if requested == "numpy" or not HAVE_NUMBA:
        return "numpy"
    return "numba"


BACKEND = _default_backend()


def resolve_backend(backend=None):
    """Return the backend name to use for a call (explicit argument wins)."""
    if backend is None:
        return BACKEND
    if backend not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a pass-through decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n):
    """Cap the numba worker count. Output does not depend on it."""
    if n is None or not HAVE_NUMBA:
        return
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))

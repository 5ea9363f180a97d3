"""Optional numba acceleration.

Set TDIMAGING_NO_NUMBA=1 to force the pure-numpy code paths (handy for
debugging and for the benchmark comparison).
"""
import os
import warnings

DISABLED = os.environ.get("TDIMAGING_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

# the TBB layer is optional; numba falls back to omp or workqueue quietly
warnings.filterwarnings("ignore", message=".*TBB.*")

try:
    if DISABLED:
        raise ImportError
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """numba.njit(cache=True) when available, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        return numba.njit(**kwargs)(fn)

    if len(args) == 1 and callable(args[0]):
        return wrap(args[0])
    return wrap


def set_threads(n):
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

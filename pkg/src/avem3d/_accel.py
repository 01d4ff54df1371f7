"""Optional numba acceleration.

Hot kernels exist twice: a pure-numpy version and an ``@njit`` version.
The numba path is used when numba imports and ``AVEM3D_NUMBA`` is not
set to ``0``.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def numba_enabled():
    return HAVE_NUMBA and os.environ.get("AVEM3D_NUMBA", "1") != "0"


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def set_threads(n):
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

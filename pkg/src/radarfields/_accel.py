"""Optional numba acceleration.

Set ``RADARFIELDS_DISABLE_NUMBA=1`` before import to route every hot kernel
through its pure-numpy implementation instead.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("RADARFIELDS_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")


def optional_njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The compiled function is always built when numba exists, so tests can
    cross-check both paths regardless of the env flag; dispatch between the
    two happens at the call sites via ``USE_NUMBA``.
    """
    def decorator(func):
        if HAVE_NUMBA:
            return numba.njit(*args, **kwargs)(func)
        return func
    return decorator

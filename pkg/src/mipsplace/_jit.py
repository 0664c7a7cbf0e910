"""Switch between numba-compiled kernels and the plain numpy path.

Set ``MIPSPLACE_DISABLE_JIT=1`` to run every kernel as ordinary Python. The
kernels are written so both paths produce bit-identical results.
"""

import os

JIT_ENV = "MIPSPLACE_DISABLE_JIT"


def _disabled_by_env():
    return os.environ.get(JIT_ENV, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and not _disabled_by_env()


def njit(func=None, **options):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if not JIT_ENABLED:
        return func if func is not None else (lambda f: f)
    options.setdefault("cache", True)
    if func is None:
        return numba.njit(**options)
    return numba.njit(**options)(func)

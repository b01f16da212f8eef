"""Numba toggle shared by the kernel module.

Set ``POLMULT_DISABLE_JIT=1`` to force the pure-numpy kernels even when numba
is importable.
"""

import os

_disabled = os.environ.get("POLMULT_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError("disabled by POLMULT_DISABLE_JIT")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


__all__ = ["HAS_NUMBA", "njit"]

"""Numba/NumPy backend selection for the hot numeric kernels.

The simulator's inner loops (thread dispatch, int8 matrix products, the
grouped convolution and the LRU trace replay) are compiled with numba by
default.  Setting the environment variable ``ASRPU_NO_NUMBA=1`` before the
package is imported selects the pure-NumPy implementations instead.  Both
paths produce bit-identical results because every accelerated kernel works
on exact integer arithmetic; ``benchmarks/bench_backends.py`` compares
their speed.
"""

import os

_TRUTHY = ("1", "true", "yes", "on")

NUMBA_DISABLED = os.environ.get("ASRPU_NO_NUMBA", "").strip().lower() in _TRUTHY

if not NUMBA_DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit when the JIT path is disabled."""

        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"

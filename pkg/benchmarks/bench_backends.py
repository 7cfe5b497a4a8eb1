"""Compare the numba-jitted hot kernels against the pure-NumPy fallback.

Runs each kernel under both implementations on realistic shapes, checks
the results are bit-identical, and prints timings.  The end-to-end row
replays one steady decoding step's thread-dispatch workload.

Usage: python benchmarks/bench_backends.py [--repeat N]

(The process imports both implementations directly, so no environment
variable juggling is needed; package users select the fallback by setting
ASRPU_NO_NUMBA=1 before import.)
"""

import argparse
import time

import numpy as np

from asrpu.backend import NUMBA_ENABLED
from asrpu.layers import (
    _conv_grouped_i8_jit,
    _conv_grouped_i8_np,
    _matmul_i8_jit,
    _matmul_i8_np,
)
from asrpu.memory import _lru_trace_jit, _lru_trace_py
from asrpu.schedule import _dispatch_jit, _dispatch_py


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_matmul(rng, repeat):
    x = rng.integers(-127, 128, size=(4, 1200)).astype(np.int8)
    w = rng.integers(-127, 128, size=(9000, 1200)).astype(np.int8)
    jit_t, jit_out = timeit(lambda: _matmul_i8_jit(x, w), repeat)
    np_t, np_out = timeit(lambda: _matmul_i8_np(x, w), repeat)
    assert np.array_equal(jit_out, np_out)
    return "int8 matmul 4x1200 @ 1200x9000", jit_t, np_t


def bench_conv(rng, repeat):
    xw = rng.integers(-127, 128, size=(4, 14, 1200)).astype(np.int8)
    w = rng.integers(-127, 128, size=(14, 12, 12)).astype(np.int8)
    jit_t, jit_out = timeit(lambda: _conv_grouped_i8_jit(xw, w, 100), repeat)
    np_t, np_out = timeit(lambda: _conv_grouped_i8_np(xw, w, 100), repeat)
    assert np.array_equal(jit_out, np_out)
    return "grouped conv 4x14x1200 (c=12)", jit_t, np_t


def bench_dispatch(rng, repeat):
    # one steady reference step: ~250k threads across ~130 kernels on 8 PEs
    kernels = []
    for _ in range(54):
        kernels.append(np.full(2400, 926, dtype=np.int64))
    for _ in range(17):
        kernels.append(np.full(4800, 283, dtype=np.int64))
    kernels.append(np.full(36000, 926, dtype=np.int64))

    def run(dispatch):
        free = np.zeros(8, dtype=np.int64)
        sink = 0
        gate = 0
        for costs in kernels:
            pes, starts, ends = dispatch(costs, free, gate)
            gate = int(ends.max())
            sink ^= int(ends[-1])
        return sink

    jit_t, jit_out = timeit(lambda: run(lambda c, f, g: _dispatch_jit(c, f, np.int64(g))), repeat)
    np_t, np_out = timeit(lambda: run(_dispatch_py), repeat)
    assert jit_out == np_out
    return "thread dispatch, one steady step", jit_t, np_t


def bench_lru(rng, repeat):
    lines = rng.integers(0, 5000, size=400_000).astype(np.int64)
    jit_t, jit_out = timeit(lambda: tuple(_lru_trace_jit(lines, 1024)), repeat)
    np_t, np_out = timeit(lambda: _lru_trace_py(lines, 1024), repeat)
    assert tuple(int(v) for v in jit_out) == np_out
    return "LRU trace replay, 400k accesses", jit_t, np_t


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not NUMBA_ENABLED:
        print("numba is disabled in this process; start without ASRPU_NO_NUMBA")
        return 1
    rng = np.random.default_rng(0)
    rows = []
    for bench in (bench_matmul, bench_conv, bench_dispatch, bench_lru):
        name, jit_t, np_t = bench(rng, args.repeat)
        rows.append((name, jit_t, np_t))
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, jit_t, np_t in rows:
        print(f"{name:<{width}}  {jit_t * 1e3:>8.2f}ms  {np_t * 1e3:>8.2f}ms  "
              f"{np_t / jit_t:>7.1f}x")
    print("\nresults bit-identical across backends for every kernel")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Benchmark the jitted edge kernels against the pure-numpy fallback.

The numpy fallback lives behind the DEBUGCN_NO_NUMBA=1 environment flag, so
this script re-executes itself once with the flag set and prints both sides:

    python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def _bench(fn, *args, repeats=5, min_rounds=3):
    fn(*args)  # warm-up (jit compilation / cache priming)
    best = float("inf")
    for _ in range(repeats):
        rounds = 0
        started = time.perf_counter()
        while True:
            fn(*args)
            rounds += 1
            elapsed = time.perf_counter() - started
            if rounds >= min_rounds and elapsed > 0.05:
                break
        best = min(best, elapsed / rounds)
    return best


def main():
    from debugcn.kernels import NUMBA_ENABLED, edge_combine, scatter_add_rows

    backend = "numba" if NUMBA_ENABLED else "numpy"
    rng = np.random.default_rng(0)

    # shape of one default training batch: 24 fc graphs of (10, 512)
    num_nodes = 24 * 522
    num_edges = 24 * 2 * 5120
    dim = 64
    x = rng.standard_normal((num_nodes, dim)).astype(np.float32)
    src = rng.integers(0, num_nodes, num_edges).astype(np.int64)
    dst = np.sort(rng.integers(0, num_nodes, num_edges).astype(np.int64))
    w = rng.standard_normal(num_edges).astype(np.float32)
    out = np.zeros_like(x)
    t_edge = _bench(edge_combine, x, src, dst, w, out)

    rows = rng.standard_normal((num_edges // 8, dim)).astype(np.float32)
    idx = np.sort(rng.integers(0, num_nodes, num_edges // 8).astype(np.int64))
    out2 = np.zeros_like(x)
    t_scatter = _bench(scatter_add_rows, rows, idx, out2)

    print(f"{backend:>6}  edge_combine      ({num_edges} edges, dim {dim}): "
          f"{t_edge * 1e3:8.2f} ms")
    print(f"{backend:>6}  scatter_add_rows  ({num_edges // 8} rows,  dim {dim}): "
          f"{t_scatter * 1e3:8.2f} ms")


if __name__ == "__main__":
    if os.environ.get("DEBUGCN_BENCH_CHILD") != "1":
        main()
        sys.stdout.flush()
        env = dict(os.environ, DEBUGCN_NO_NUMBA="1", DEBUGCN_BENCH_CHILD="1")
        subprocess.run([sys.executable, __file__], env=env, check=True)
    else:
        main()

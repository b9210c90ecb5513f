"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

Set DEBUGCN_NO_NUMBA=1 to force the numpy path (useful for debugging and
for the benchmark in benchmarks/bench_kernels.py). Everything else in the
package calls the dispatching wrappers at the bottom, never the backends
directly.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("DEBUGCN_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


# ---------------------------------------------------------------- numpy path

def _edge_combine_np(x, src, dst, w, out):
    np.add.at(out, dst, w[:, None] * x[src])


def _scatter_add_rows_np(rows, idx, out):
    np.add.at(out, idx, rows)


# ---------------------------------------------------------------- numba path

if NUMBA_ENABLED:

    @njit(cache=True)
    def _edge_combine_nb(x, src, dst, w, out):
        d = x.shape[1]
        for e in range(src.shape[0]):
            s = src[e]
            t = dst[e]
            we = w[e]
            for c in range(d):
                out[t, c] += we * x[s, c]

    @njit(cache=True)
    def _scatter_add_rows_nb(rows, idx, out):
        d = rows.shape[1]
        for e in range(idx.shape[0]):
            t = idx[e]
            for c in range(d):
                out[t, c] += rows[e, c]


# --------------------------------------------------------------- dispatchers

def edge_combine(x, src, dst, w, out):
    """out[dst[e]] += w[e] * x[src[e]] for every edge e.

    The one kernel of the message-passing layer: forward aggregation with
    (src, dst) and its backward with the roles swapped.
    """
    if NUMBA_ENABLED:
        _edge_combine_nb(x, src, dst, w, out)
    else:
        _edge_combine_np(x, src, dst, w, out)


def scatter_add_rows(rows, idx, out):
    """out[idx[e]] += rows[e] for every row e."""
    if NUMBA_ENABLED:
        _scatter_add_rows_nb(rows, idx, out)
    else:
        _scatter_add_rows_np(rows, idx, out)

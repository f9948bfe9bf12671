"""Dense pair sums of prior kernels over large node sets.

The evidence variance needs sums of k(x_i, x_j) over all node pairs.
For node counts in the tens of thousands the O(N^2) sum is done with a
numba-jitted symmetric loop when numba is importable, falling back to
chunked numpy otherwise.  Both paths return the same quantities: the
total pair sum and the per-row sums (used for standard-error estimates).
"""

from __future__ import annotations

import numpy as np

from .kernels import MATERN32, MATERN52, SQUARED_EXPONENTIAL, cross_gram

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

_FAMILY_CODES = {SQUARED_EXPONENTIAL: 0, MATERN32: 1, MATERN52: 2}

if _HAVE_NUMBA:

    @numba.njit(fastmath=True, cache=True)
    def _pair_sums_jit(xs, family):
        n, d = xs.shape
        sqrt3 = np.sqrt(3.0)
        sqrt5 = np.sqrt(5.0)
        row = np.zeros(n)
        for i in range(n):
            for j in range(i + 1, n):
                r2 = 0.0
                for k in range(d):
                    diff = xs[i, k] - xs[j, k]
                    r2 += diff * diff
                if family == 0:
                    v = np.exp(-0.5 * r2)
                elif family == 1:
                    r = np.sqrt(r2)
                    v = (1.0 + sqrt3 * r) * np.exp(-sqrt3 * r)
                else:
                    r = np.sqrt(r2)
                    v = (1.0 + sqrt5 * r + (5.0 / 3.0) * r2) * np.exp(-sqrt5 * r)
                row[i] += v
                row[j] += v
        for i in range(n):
            row[i] += 1.0  # diagonal term of the unit-scale kernel
        return row


def prior_pair_row_sums(kernel, nodes) -> np.ndarray:
    """Per-row sums of the prior Gram matrix over ``nodes``.

    row[i] = sum_j k(x_i, x_j); the total pair sum is row.sum().
    """
    nodes = np.asarray(nodes, dtype=float)
    if _HAVE_NUMBA:
        xs = np.ascontiguousarray(nodes / kernel.length_scales)
        row = _pair_sums_jit(xs, _FAMILY_CODES[kernel.family])
        return kernel.output_scale * row
    n = nodes.shape[0]
    row = np.zeros(n)
    step = max(1, int(1e7) // max(n, 1))
    for s in range(0, n, step):
        row[s : s + step] = cross_gram(kernel, nodes[s : s + step], nodes).sum(axis=1)
    return row

"""Exact linear assignment by shortest augmenting paths (Hungarian method
with row/column potentials), O(n^3)."""
from __future__ import annotations

import numpy as np

from .errors import SizeError


def solve_min(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost perfect matching of a square cost matrix.

    Returns ``(cols, total)`` where row ``i`` is assigned column ``cols[i]``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise SizeError(f"cost matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    inf = float("inf")
    # 1-based with a virtual column 0 holding the row being inserted
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.int64)
    cols[match[1:] - 1] = np.arange(n)
    return cols, float(c[np.arange(n), cols].sum())


def solve_max(weight) -> tuple[np.ndarray, float]:
    """Maximum-weight perfect matching."""
    w = np.asarray(weight, dtype=np.float64)
    cols, _ = solve_min(-w)
    return cols, float(w[np.arange(len(cols)), cols].sum())

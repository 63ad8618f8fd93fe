"""Hot numeric kernels: Gini split search and tree traversal.

Both kernels exist twice: a numba @njit version and a pure-numpy fallback.
Set PERMEVADE_NO_NUMBA=1 to force the numpy path (useful on platforms where
numba is unavailable or for benchmarking; see benchmarks/bench_kernels.py).

All feature data is binary, so a split is fully described by its feature
index: left child = bit 0, right child = bit 1.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("PERMEVADE_NO_NUMBA", "").lower() not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def best_split_numpy(X, y, rows, min_leaf):
    """Best Gini split for the node holding ``rows``.

    Returns (feature, gain): feature index with the largest impurity
    decrease subject to both children holding >= min_leaf rows, or
    (-1, 0.0) if no valid split improves on the parent.  Ties break to
    the lowest feature index.
    """
    n = rows.size
    ysub = y[rows].astype(np.int64)
    c1 = int(ysub.sum())
    if c1 == 0 or c1 == n:
        return -1, 0.0
    sub = X[rows].astype(np.int64)
    n1 = sub.sum(axis=0)            # rows with bit 1, per feature
    m1 = ysub @ sub                 # class-1 rows among bit 1
    n0 = n - n1
    m0 = c1 - m1

    valid = (n1 >= min_leaf) & (n0 >= min_leaf)
    parent = 1.0 - (c1 / n) ** 2 - ((n - c1) / n) ** 2

    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = 1.0 - (m1 / n1) ** 2 - ((n1 - m1) / n1) ** 2
        g0 = 1.0 - (m0 / n0) ** 2 - ((n0 - m0) / n0) ** 2
    child = np.where(valid, (n1 * np.nan_to_num(g1) + n0 * np.nan_to_num(g0)) / n, np.inf)
    gains = np.where(valid, parent - child, -np.inf)

    best = int(np.argmax(gains))    # argmax takes the first (lowest) index on ties
    if gains[best] <= 1e-12:
        return -1, 0.0
    return best, float(gains[best])


def tree_apply_numpy(feature, left, right, value, X):
    """Leaf value (class-1 fraction) for every row of X."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        f = feature[node[idx]]
        bit = X[idx, f] != 0
        node[idx] = np.where(bit, right[node[idx]], left[node[idx]])
        active[idx] = feature[node[idx]] >= 0
    return value[node]


if USE_NUMBA:

    @njit(cache=True)
    def _best_split_nb(X, y, rows, min_leaf):
        n = rows.size
        d = X.shape[1]
        c1 = 0
        for i in range(n):
            c1 += y[rows[i]]
        if c1 == 0 or c1 == n:
            return -1, 0.0
        parent = 1.0 - (c1 / n) ** 2 - ((n - c1) / n) ** 2
        best_feat = -1
        best_gain = 1e-12
        for f in range(d):
            n1 = 0
            m1 = 0
            for i in range(n):
                r = rows[i]
                if X[r, f]:
                    n1 += 1
                    m1 += y[r]
            n0 = n - n1
            if n1 < min_leaf or n0 < min_leaf:
                continue
            m0 = c1 - m1
            g1 = 1.0 - (m1 / n1) ** 2 - ((n1 - m1) / n1) ** 2
            g0 = 1.0 - (m0 / n0) ** 2 - ((n0 - m0) / n0) ** 2
            gain = parent - (n1 * g1 + n0 * g0) / n
            if gain > best_gain:
                best_gain = gain
                best_feat = f
        if best_feat < 0:
            return -1, 0.0
        return best_feat, best_gain

    @njit(cache=True)
    def _tree_apply_nb(feature, left, right, value, X):
        n = X.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]]:
                    node = right[node]
                else:
                    node = left[node]
            out[i] = value[node]
        return out

    def best_split_numba(X, y, rows, min_leaf):
        feat, gain = _best_split_nb(X, y, rows, min_leaf)
        return int(feat), float(gain)

    def tree_apply_numba(feature, left, right, value, X):
        return _tree_apply_nb(feature, left, right, value, X)

    best_split = best_split_numba
    tree_apply = tree_apply_numba
else:
    best_split_numba = None
    tree_apply_numba = None
    best_split = best_split_numpy
    tree_apply = tree_apply_numpy

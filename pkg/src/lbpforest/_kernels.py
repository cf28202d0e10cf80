"""Compiled inner loops for tree induction and traversal.

Randomness inside a tree comes from a splitmix64 stream seeded once per
tree, so a tree depends only on its seed and its data.
"""

import numpy as np
from numba import njit

MODE_RANDOM = 0
MODE_COMPLETELY_RANDOM = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53
_GAIN_EPS = 1e-12


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _uniform(state):
    return float(_next_u64(state) >> np.uint64(11)) * _TO_UNIT


@njit(cache=True, nogil=True)
def _randint(state, n):
    j = int(_uniform(state) * n)
    if j >= n:
        j = n - 1
    return j


@njit(cache=True, nogil=True)
def _best_gini_split(XT, y, idx, s, e, cand, min_leaf, vals):
    """Best (feature, threshold) over the candidate features by weighted Gini.

    Candidates are scanned in ascending feature order and thresholds in
    ascending order; only a strictly better score replaces the incumbent.
    Returns (feature, threshold, weighted_child_impurity) or feature -1.
    """
    n = e - s
    best_score = -1.0
    best_f = -1
    best_t = 0.0
    c1 = 0
    for k in range(n):
        c1 += y[idx[s + k]]
    c0 = n - c1
    for ci in range(cand.shape[0]):
        f = cand[ci]
        row = XT[f]
        for k in range(n):
            vals[k] = row[idx[s + k]]
        order = np.argsort(vals[:n])
        l0 = 0
        l1 = 0
        for i in range(n - 1):
            o = order[i]
            if y[idx[s + o]] == 1:
                l1 += 1
            else:
                l0 += 1
            v = vals[o]
            vn = vals[order[i + 1]]
            if not (v < vn):
                continue
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            r0 = c0 - l0
            r1 = c1 - l1
            # maximizing sum(count^2)/size over both children minimizes weighted Gini
            score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
            if score > best_score:
                best_score = score
                best_f = f
                best_t = (np.float64(v) + np.float64(vn)) * 0.5
    impurity = 0.0
    if best_f >= 0:
        impurity = (n - best_score) / n
    return best_f, best_t, impurity


@njit(cache=True, nogil=True)
def _random_split(XT, idx, s, e, perm, state):
    """Uniform feature among the non-constant ones, uniform threshold in [min, max)."""
    d = perm.shape[0]
    for i in range(d):
        j = i + _randint(state, d - i)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        f = perm[i]
        row = XT[f]
        lo = row[idx[s]]
        hi = lo
        for k in range(s + 1, e):
            v = row[idx[k]]
            if v < lo:
                lo = v
            elif v > hi:
                hi = v
        if hi > lo:
            flo = np.float64(lo)
            t = flo + _uniform(state) * (np.float64(hi) - flo)
            if t >= hi:
                t = flo
            return f, t
    return -1, 0.0


@njit(cache=True, nogil=True)
def build_tree(XT, y, sample, mode, max_features, min_leaf, max_depth, seed):
    """Grow one tree on ``sample`` (row indices, duplicates allowed).

    ``XT`` is the feature-major (d x n) float32 matrix.  Returns node arrays
    ``feature, threshold, left, right, value`` truncated to the node count.
    Leaves carry ``feature == -1``.
    """
    d = XT.shape[0]
    n = sample.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros((cap, 2), dtype=np.float64)

    idx = sample.copy()
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float32)
    perm = np.arange(d).astype(np.int64)
    cand = np.empty(max_features, dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed

    st_node = np.empty(cap, dtype=np.int64)
    st_s = np.empty(cap, dtype=np.int64)
    st_e = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        s = st_s[sp]
        e = st_e[sp]
        depth = st_depth[sp]
        size = e - s
        c1 = 0
        for k in range(s, e):
            c1 += y[idx[k]]
        c0 = size - c1
        value[node, 0] = c0 / size
        value[node, 1] = c1 / size
        if c0 == 0 or c1 == 0 or size < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        if mode == MODE_RANDOM:
            for i in range(max_features):
                j = i + _randint(state, d - i)
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
            cand[:] = np.sort(perm[:max_features])
            f, t, child_imp = _best_gini_split(XT, y, idx, s, e, cand, min_leaf, vals)
            if f < 0:
                continue
            parent_imp = 1.0 - (c0 * c0 + c1 * c1) / (size * size)
            if not (child_imp < parent_imp - _GAIN_EPS):
                continue
        else:
            f, t = _random_split(XT, idx, s, e, perm, state)
            if f < 0:
                continue

        # stable partition: x <= t goes left
        row = XT[f]
        nl = 0
        for k in range(s, e):
            if row[idx[k]] <= t:
                buf[nl] = idx[k]
                nl += 1
        nr = 0
        for k in range(s, e):
            if not (row[idx[k]] <= t):
                buf[nl + nr] = idx[k]
                nr += 1
        if nl < min_leaf or nr < min_leaf:
            continue
        for k in range(size):
            idx[s + k] = buf[k]

        feature[node] = f
        threshold[node] = t
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        # push right first so the left subtree is expanded first
        st_node[sp] = ri
        st_s[sp] = s + nl
        st_e[sp] = e
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = li
        st_s[sp] = s
        st_e[sp] = s + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def accumulate_tree(X, feature, threshold, left, right, value, out):
    """Add the leaf distribution reached by every row of ``X`` into ``out``."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i, 0] += value[node, 0]
        out[i, 1] += value[node, 1]


@njit(cache=True, nogil=True)
def accumulate_tree_rows(X, rows, feature, threshold, left, right, value, out, hits):
    """Like :func:`accumulate_tree` restricted to ``rows`` (used for OOB)."""
    for r in range(rows.shape[0]):
        i = rows[r]
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i, 0] += value[node, 0]
        out[i, 1] += value[node, 1]
        hits[i] += 1

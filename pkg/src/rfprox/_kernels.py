"""Compiled CART induction and routing.

Node arrays are flat and indexed by node id; a node is a leaf when
``left[node] == -1``.  Categorical splits send a code left when its bit is
set in ``left_mask``; codes absent from ``present_mask`` (never seen in the
node) follow the heavier child.
"""

import numpy as np
from numba import njit

MAX_LEVELS = 63
EXHAUSTIVE_LEVELS = 10


@njit(cache=True, nogil=True)
def _class_gain(cl, ct, WL, W):
    # weighted Gini decrease, written so that equal child proportions give exactly 0
    WR = W - WL
    acc = 0.0
    for k in range(ct.shape[0]):
        diff = cl[k] * WR - (ct[k] - cl[k]) * WL
        acc += diff * diff
    return acc / (WL * WR * W)


@njit(cache=True, nogil=True)
def _reg_gain(sL, sT, WL, W):
    WR = W - WL
    diff = sL * WR - (sT - sL) * WL
    return diff * diff / (WL * WR * W)


@njit(cache=True, nogil=True)
def _numeric_split(X, f, idx, s, e, yc, yr, w, classification, ct, sT, W, tol):
    m = e - s
    vals = np.empty(m)
    for p in range(m):
        vals[p] = X[idx[s + p], f]
    order = np.argsort(vals, kind="mergesort")
    best = 0.0
    thr = 0.0
    cl = np.zeros(ct.shape[0])
    sL = 0.0
    WL = 0.0
    for p in range(m - 1):
        r = idx[s + order[p]]
        WL += w[r]
        if classification:
            cl[yc[r]] += w[r]
        else:
            sL += w[r] * yr[r]
        a = vals[order[p]]
        b = vals[order[p + 1]]
        if a == b:
            continue
        if classification:
            g = _class_gain(cl, ct, WL, W)
        else:
            g = _reg_gain(sL, sT, WL, W)
        if g > best and g > tol:
            best = g
            mid = 0.5 * (a + b)
            thr = mid if mid < b else a
    return best, thr


@njit(cache=True, nogil=True)
def _categorical_split(X, f, n_levels, idx, s, e, yc, yr, w, classification, ct, sT, W, tol):
    L = n_levels
    K = ct.shape[0]
    cw = np.zeros(L)
    cc = np.zeros((L, K))
    cs = np.zeros(L)
    for p in range(s, e):
        r = idx[p]
        c = int(X[r, f])
        cw[c] += w[r]
        if classification:
            cc[c, yc[r]] += w[r]
        else:
            cs[c] += w[r] * yr[r]
    present = np.flatnonzero(cw > 0)
    P = present.shape[0]
    best = 0.0
    best_mask = np.int64(0)
    if P < 2:
        return best, best_mask
    if P <= EXHAUSTIVE_LEVELS:
        n_sub = (1 << (P - 1)) - 1
    else:
        n_sub = P
    cl = np.zeros(K)
    for sub in range(1, n_sub + 1):
        mask = np.int64(0)
        if P <= EXHAUSTIVE_LEVELS:
            for b in range(P - 1):
                if (sub >> b) & 1:
                    mask |= np.int64(1) << present[b]
        else:
            mask = np.int64(1) << present[sub - 1]
        WL = 0.0
        sL = 0.0
        cl[:] = 0.0
        for b in range(P):
            c = present[b]
            if (mask >> c) & 1:
                WL += cw[c]
                if classification:
                    for k in range(K):
                        cl[k] += cc[c, k]
                else:
                    sL += cs[c]
        if classification:
            g = _class_gain(cl, ct, WL, W)
        else:
            g = _reg_gain(sL, sT, WL, W)
        if g > best and g > tol:
            best = g
            best_mask = mask
    return best, best_mask


@njit(cache=True, nogil=True)
def build_tree(X, is_cat, n_levels, yc, yr, counts, n_classes, mtry, min_node_size, classification, seed):
    """Grow one unpruned tree on the rows with ``counts > 0``, weighted by ``counts``."""
    np.random.seed(seed)
    n, d = X.shape
    w = counts.astype(np.float64)
    idx = np.flatnonzero(counts > 0)
    m = idx.shape[0]
    cap = 2 * m + 1
    K = n_classes if classification else 1

    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left_mask = np.zeros(cap, np.int64)
    present_mask = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    weight = np.zeros(cap)
    value = np.zeros((cap, K))
    depth = np.zeros(cap, np.int64)

    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_s[top]
        e = st_e[top]

        W = 0.0
        sT = 0.0
        ct = np.zeros(K)
        for p in range(s, e):
            r = idx[p]
            W += w[r]
            if classification:
                ct[yc[r]] += w[r]
            else:
                sT += w[r] * yr[r]
        weight[node] = W
        if classification:
            value[node, :] = ct
        else:
            value[node, 0] = sT

        if W <= min_node_size:
            continue
        if classification:
            n_present = 0
            for k in range(K):
                if ct[k] > 0:
                    n_present += 1
            if n_present <= 1:
                continue
            tol = 0.0
        else:
            mean = sT / W
            sse = 0.0
            for p in range(s, e):
                r = idx[p]
                sse += w[r] * (yr[r] - mean) ** 2
            if sse <= 0.0:
                continue
            tol = 1e-12 * sse

        perm = np.random.permutation(d)
        best = 0.0
        best_f = -1
        best_thr = 0.0
        best_mask = np.int64(0)
        for q in range(d):
            # mtry draws first; keep looking past them only while nothing splits
            if q >= mtry and best_f >= 0:
                break
            f = perm[q]
            if is_cat[f]:
                g, mask = _categorical_split(X, f, n_levels[f], idx, s, e, yc, yr, w, classification, ct, sT, W, tol)
                if g > best:
                    best, best_f, best_mask = g, f, mask
            else:
                g, thr = _numeric_split(X, f, idx, s, e, yc, yr, w, classification, ct, sT, W, tol)
                if g > best:
                    best, best_f, best_thr = g, f, thr
        if best_f < 0:
            continue

        # in-place partition of idx[s:e]
        lo = s
        hi = e - 1
        while lo <= hi:
            r = idx[lo]
            if is_cat[best_f]:
                go_left = ((best_mask >> np.int64(X[r, best_f])) & 1) == 1
            else:
                go_left = X[r, best_f] <= best_thr
            if go_left:
                lo += 1
            else:
                idx[lo] = idx[hi]
                idx[hi] = r
                hi -= 1
        if is_cat[best_f]:
            pm = np.int64(0)
            for p in range(s, e):
                pm |= np.int64(1) << np.int64(X[idx[p], best_f])
            present_mask[node] = pm
            left_mask[node] = best_mask
        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        depth[lnode] = depth[node] + 1
        depth[rnode] = depth[node] + 1
        st_node[top] = rnode
        st_s[top] = lo
        st_e[top] = e
        top += 1
        st_node[top] = lnode
        st_s[top] = s
        st_e[top] = lo
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left_mask[:n_nodes].copy(),
        present_mask[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        weight[:n_nodes].copy(),
        value[:n_nodes].copy(),
        depth[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def apply_nodes(X, is_cat, offsets, feature, threshold, left_mask, present_mask, left, right, weight):
    """Leaf id (local to each tree) of every row of ``X`` in every tree."""
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.empty((n, T), np.int64)
    for t in range(T):
        base = offsets[t]
        for i in range(n):
            node = 0
            while left[base + node] >= 0:
                g = base + node
                f = feature[g]
                x = X[i, f]
                if is_cat[f]:
                    c = np.int64(x)
                    if 0 <= c < MAX_LEVELS and (present_mask[g] >> c) & 1:
                        go_left = ((left_mask[g] >> c) & 1) == 1
                    else:
                        go_left = weight[base + left[g]] >= weight[base + right[g]]
                else:
                    go_left = x <= threshold[g]
                node = left[g] if go_left else right[g]
            out[i, t] = node
    return out

"""JIT-compiled hot kernels: interval scoring and regression-tree fitting.

Loop-oriented code compiled with ``numba.njit``. The pure-numpy twin lives in
:mod:`chimeric.kernels.numpy_impl`; both obey the same contracts and are
exercised against each other by the kernel parity tests. Selection between
the two happens in :mod:`chimeric.kernels`.
"""

import numpy as np
from numba import njit

# Leaf marker in the flat tree arrays.
LEAF = -1

# Relative guard below which a split gain is treated as numerical noise.
_MIN_GAIN = 1e-12


@njit(cache=True, nogil=True)
def wis_matrix(q, y, median_idx, lo_idx, hi_idx, alphas):
    """Weighted interval score of every (row, target) forecast block.

    q has shape (R, T, K) with quantile values in level order, y has shape
    (T,). lo_idx/hi_idx/alphas describe the central-interval decomposition of
    the K levels. Returns an (R, T) score array.
    """
    n_rows, n_targets, _ = q.shape
    n_pairs = lo_idx.shape[0]
    out = np.empty((n_rows, n_targets))
    norm = n_pairs + 0.5
    for r in range(n_rows):
        for t in range(n_targets):
            yt = y[t]
            acc = 0.5 * abs(yt - q[r, t, median_idx])
            for j in range(n_pairs):
                a = alphas[j]
                l = q[r, t, lo_idx[j]]
                u = q[r, t, hi_idx[j]]
                term = u - l
                if yt < l:
                    term += (2.0 / a) * (l - yt)
                elif yt > u:
                    term += (2.0 / a) * (yt - u)
                acc += 0.5 * a * term
            # Sub-ulp negative widths from rounded convex combinations must
            # not push a mathematically non-negative score below zero.
            if acc < 0.0:
                acc = 0.0
            out[r, t] = acc / norm
    return out


@njit(cache=True, nogil=True)
def combined_mean_wis(q, y, w, median_idx, lo_idx, hi_idx, alphas):
    """Mean WIS over targets of the weight-combined forecast.

    The combination is the per-quantile convex combination sum_r w[r] *
    q[r, t, k]. This is the inner objective of the weight optimizer, so it
    avoids materializing intermediates beyond one (K,) buffer.
    """
    n_rows, n_targets, n_levels = q.shape
    n_pairs = lo_idx.shape[0]
    norm = n_pairs + 0.5
    combined = np.empty(n_levels)
    total = 0.0
    for t in range(n_targets):
        for k in range(n_levels):
            s = 0.0
            for r in range(n_rows):
                s += w[r] * q[r, t, k]
            combined[k] = s
        yt = y[t]
        acc = 0.5 * abs(yt - combined[median_idx])
        for j in range(n_pairs):
            a = alphas[j]
            l = combined[lo_idx[j]]
            u = combined[hi_idx[j]]
            term = u - l
            if yt < l:
                term += (2.0 / a) * (l - yt)
            elif yt > u:
                term += (2.0 / a) * (yt - u)
            acc += 0.5 * a * term
        if acc < 0.0:
            acc = 0.0
        total += acc / norm
    return total / n_targets


@njit(cache=True, nogil=True)
def tree_fit(X, yv, max_depth, min_leaf, mode, k_features, node_rand):
    """Fit one regression tree, returned as flat node arrays.

    mode 0 picks the exact variance-minimizing split over all features; mode
    1 draws one uniform threshold per feature on a random feature subset and
    keeps the best candidate. node_rand[(node, :p)] orders the subset and
    node_rand[(node, p + f)] positions feature f's threshold; it must have at
    least 2 * n_rows + 1 rows for mode 1.

    Returns (feature, thresh, left, right, value, n_nodes); feature == -1
    marks a leaf and value holds the node's training mean.
    """
    n, p = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, LEAF, dtype=np.int64)
    thresh = np.zeros(max_nodes)
    left = np.full(max_nodes, LEAF, dtype=np.int64)
    right = np.full(max_nodes, LEAF, dtype=np.int64)
    value = np.zeros(max_nodes)

    idx = np.arange(n)
    scratch = np.empty(n, dtype=np.int64)

    # Stack rows: node id, range start, range end, depth.
    stack = np.empty((max_nodes, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        count = end - start

        ysum = 0.0
        for i in range(start, end):
            ysum += yv[idx[i]]
        value[node] = ysum / count

        if depth >= max_depth or count < 2 * min_leaf:
            continue

        parent_proxy = ysum * ysum / count
        min_gain = _MIN_GAIN * (1.0 + abs(parent_proxy))
        best_proxy = parent_proxy + min_gain
        best_feat = -1
        best_thr = 0.0

        if mode == 0:
            for f in range(p):
                xv = np.empty(count)
                yo = np.empty(count)
                for i in range(count):
                    xv[i] = X[idx[start + i], f]
                order = np.argsort(xv)
                for i in range(count):
                    yo[i] = yv[idx[start + order[i]]]
                xs = xv[order]
                cy = 0.0
                for i in range(count - 1):
                    cy += yo[i]
                    n_l = i + 1
                    n_r = count - n_l
                    if n_r < min_leaf:
                        break
                    if n_l < min_leaf:
                        continue
                    if xs[i + 1] <= xs[i]:
                        continue
                    rest = ysum - cy
                    proxy = cy * cy / n_l + rest * rest / n_r
                    if proxy > best_proxy:
                        best_proxy = proxy
                        best_feat = f
                        best_thr = 0.5 * (xs[i] + xs[i + 1])
        else:
            order = np.argsort(node_rand[node, :p])
            for fi in range(k_features):
                f = order[fi]
                lo = X[idx[start], f]
                hi = lo
                for i in range(start + 1, end):
                    v = X[idx[i], f]
                    if v < lo:
                        lo = v
                    elif v > hi:
                        hi = v
                if hi <= lo:
                    continue
                thr = lo + node_rand[node, p + f] * (hi - lo)
                n_l = 0
                cy = 0.0
                for i in range(start, end):
                    if X[idx[i], f] <= thr:
                        n_l += 1
                        cy += yv[idx[i]]
                n_r = count - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                rest = ysum - cy
                proxy = cy * cy / n_l + rest * rest / n_r
                if proxy > best_proxy:
                    best_proxy = proxy
                    best_feat = f
                    best_thr = thr

        if best_feat < 0:
            continue

        # Stable partition of idx[start:end] around the chosen split.
        n_l = 0
        for i in range(start, end):
            if X[idx[i], best_feat] <= best_thr:
                scratch[n_l] = idx[i]
                n_l += 1
        pos = n_l
        for i in range(start, end):
            if X[idx[i], best_feat] > best_thr:
                scratch[pos] = idx[i]
                pos += 1
        for i in range(count):
            idx[start + i] = scratch[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        thresh[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        stack[top, 0] = right_id
        stack[top, 1] = start + n_l
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_l
        stack[top, 3] = depth + 1
        top += 1

    return feature[:n_nodes], thresh[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True, nogil=True)
def tree_predict(feature, thresh, left, right, value, Xq):
    """Evaluate a flat tree on query rows."""
    nq = Xq.shape[0]
    out = np.empty(nq)
    for i in range(nq):
        node = 0
        while feature[node] >= 0:
            if Xq[i, feature[node]] <= thresh[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out

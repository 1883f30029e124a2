"""Pure-numpy fallback kernels.

Vectorized equivalents of :mod:`chimeric.kernels.numba_impl`, used when the
JIT backend is disabled via ``CHIMERIC_NUMBA=0`` or numba is unavailable.
Results agree with the JIT kernels up to floating-point summation order
(near-tied tree splits can in principle resolve differently; the parity
tests pin both backends on shared inputs).
"""

import numpy as np

LEAF = -1

_MIN_GAIN = 1e-12


def wis_matrix(q, y, median_idx, lo_idx, hi_idx, alphas):
    """Weighted interval score of every (row, target) forecast block."""
    n_pairs = lo_idx.shape[0]
    yt = y[np.newaxis, :, np.newaxis]
    lo = q[:, :, lo_idx]
    hi = q[:, :, hi_idx]
    width = hi - lo
    below = np.clip(lo - yt, 0.0, None)
    above = np.clip(yt - hi, 0.0, None)
    per_interval = width + (2.0 / alphas) * (below + above)
    acc = 0.5 * np.abs(y[np.newaxis, :] - q[:, :, median_idx])
    acc = acc + np.sum(0.5 * alphas * per_interval, axis=2)
    # Sub-ulp negative widths from rounded convex combinations must not push
    # a mathematically non-negative score below zero.
    np.clip(acc, 0.0, None, out=acc)
    return acc / (n_pairs + 0.5)


def combined_mean_wis(q, y, w, median_idx, lo_idx, hi_idx, alphas):
    """Mean WIS over targets of the weight-combined forecast."""
    combined = np.tensordot(w, q, axes=1)[np.newaxis, :, :]
    return float(wis_matrix(combined, y, median_idx, lo_idx, hi_idx, alphas).mean())


def tree_fit(X, yv, max_depth, min_leaf, mode, k_features, node_rand):
    """Fit one regression tree, returned as flat node arrays.

    Same contract as the JIT version: mode 0 is the exact best split, mode 1
    draws random thresholds on a node_rand-ordered feature subset.
    """
    n, p = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, LEAF, dtype=np.int64)
    thresh = np.zeros(max_nodes)
    left = np.full(max_nodes, LEAF, dtype=np.int64)
    right = np.full(max_nodes, LEAF, dtype=np.int64)
    value = np.zeros(max_nodes)

    idx = np.arange(n)
    stack = [(0, 0, n, 0)]
    n_nodes = 1

    while stack:
        node, start, end, depth = stack.pop()
        rows = idx[start:end]
        count = end - start
        yn = yv[rows]
        ysum = float(yn.sum())
        value[node] = ysum / count

        if depth >= max_depth or count < 2 * min_leaf:
            continue

        parent_proxy = ysum * ysum / count
        min_gain = _MIN_GAIN * (1.0 + abs(parent_proxy))
        best_proxy = parent_proxy + min_gain
        best_feat = -1
        best_thr = 0.0

        if mode == 0:
            Xn = X[rows]
            order = np.argsort(Xn, axis=0)
            xs = np.take_along_axis(Xn, order, axis=0)
            cy = np.cumsum(yn[order], axis=0)[:-1]
            n_l = np.arange(1, count)[:, None]
            n_r = count - n_l
            valid = (n_l >= min_leaf) & (n_r >= min_leaf) & (xs[1:] > xs[:-1])
            if valid.any():
                rest = ysum - cy
                proxy = np.where(valid, cy * cy / n_l + rest * rest / n_r, -np.inf)
                # Feature-major first-max matches the JIT loop's tie-breaking.
                flat = int(np.argmax(proxy.T))
                f, j = divmod(flat, count - 1)
                if proxy[j, f] > best_proxy:
                    best_proxy = float(proxy[j, f])
                    best_feat = f
                    best_thr = 0.5 * (xs[j, f] + xs[j + 1, f])
        else:
            feats = np.argsort(node_rand[node, :p])[:k_features]
            Xn = X[rows][:, feats]
            lo = Xn.min(axis=0)
            hi = Xn.max(axis=0)
            thr = lo + node_rand[node, p + feats] * (hi - lo)
            go_left = Xn <= thr
            n_l = go_left.sum(axis=0)
            n_r = count - n_l
            ok = (hi > lo) & (n_l >= min_leaf) & (n_r >= min_leaf)
            if ok.any():
                cy = yn @ go_left
                rest = ysum - cy
                with np.errstate(divide="ignore", invalid="ignore"):
                    proxy = np.where(ok, cy * cy / n_l + rest * rest / n_r, -np.inf)
                fi = int(np.argmax(proxy))
                if proxy[fi] > best_proxy:
                    best_proxy = float(proxy[fi])
                    best_feat = int(feats[fi])
                    best_thr = float(thr[fi])

        if best_feat < 0:
            continue

        go_left = X[rows, best_feat] <= best_thr
        n_l = int(go_left.sum())
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feat
        thresh[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        stack.append((right_id, start + n_l, end, depth + 1))
        stack.append((left_id, start, start + n_l, depth + 1))

    return feature[:n_nodes], thresh[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def tree_predict(feature, thresh, left, right, value, Xq):
    """Evaluate a flat tree on query rows by vectorized level descent."""
    nq = Xq.shape[0]
    ptr = np.zeros(nq, dtype=np.int64)
    rows = np.arange(nq)
    while True:
        f = feature[ptr]
        active = f >= 0
        if not active.any():
            break
        act_rows = rows[active]
        act_ptr = ptr[active]
        go_left = Xq[act_rows, f[active]] <= thresh[act_ptr]
        ptr[active] = np.where(go_left, left[act_ptr], right[act_ptr])
    return value[ptr]

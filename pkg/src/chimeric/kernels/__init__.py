"""Backend selection for the hot numeric kernels.

The JIT backend is the default. Set ``CHIMERIC_NUMBA=0`` (or ``false``,
``no``, ``off``) before import to force the pure-numpy fallback; the
fallback is also selected automatically when numba cannot be imported.
``BACKEND`` records which implementation is live.

Both backends expose the same four functions:

- ``wis_matrix(q, y, median_idx, lo_idx, hi_idx, alphas)``
- ``combined_mean_wis(q, y, w, median_idx, lo_idx, hi_idx, alphas)``
- ``tree_fit(X, y, max_depth, min_leaf, mode, k_features, node_rand)``
- ``tree_predict(feature, thresh, left, right, value, Xq)``

Arrays must be float64 (int64 for index arrays); callers in this package
normalize dtypes before dispatching.
"""

import os

__all__ = [
    "BACKEND",
    "USING_NUMBA",
    "LEAF",
    "wis_matrix",
    "combined_mean_wis",
    "tree_fit",
    "tree_predict",
    "numba_enabled_by_env",
]


def numba_enabled_by_env(value: str | None) -> bool:
    """Interpret the CHIMERIC_NUMBA environment value (default: enabled)."""
    if value is None:
        return True
    return value.strip().lower() not in ("0", "false", "no", "off")


def _load_backend():
    if numba_enabled_by_env(os.environ.get("CHIMERIC_NUMBA")):
        try:
            from . import numba_impl

            return numba_impl, "numba"
        except ImportError:
            pass
    from . import numpy_impl

    return numpy_impl, "numpy"


_impl, BACKEND = _load_backend()
USING_NUMBA = BACKEND == "numba"

LEAF = _impl.LEAF
wis_matrix = _impl.wis_matrix
combined_mean_wis = _impl.combined_mean_wis
tree_fit = _impl.tree_fit
tree_predict = _impl.tree_predict


def warm_up() -> None:
    """Trigger JIT compilation on tiny inputs so later calls run hot."""
    import numpy as np

    q = np.zeros((1, 1, 3))
    q[0, 0] = [0.0, 1.0, 2.0]
    y = np.array([1.0])
    lo = np.array([0], dtype=np.int64)
    hi = np.array([2], dtype=np.int64)
    alphas = np.array([0.5])
    wis_matrix(q, y, 1, lo, hi, alphas)
    combined_mean_wis(q, y, np.array([1.0]), 1, lo, hi, alphas)
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    yv = np.array([0.0, 1.0, 2.0, 3.0])
    pool = np.full((9, 2), 0.5)
    for mode in (0, 1):
        tree = tree_fit(X, yv, 2, 1, mode, 1, pool)
        tree_predict(*tree, X)

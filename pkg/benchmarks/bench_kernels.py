"""Benchmark the JIT kernels against the pure-numpy fallback.

Times the three hot paths on workload sizes representative of a full
evaluation run: matrix WIS scoring, the weight-optimizer objective, and
regression-tree fitting (exact splits and randomized forests).

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from chimeric.kernels import numba_impl, numpy_impl


def _time(fn, repeats):
    fn()  # warm-up / JIT compile
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    # WIS over a 60-model x 12-target x 23-level matrix.
    q = np.sort(rng.random((60, 12, 23)) * 1e5, axis=2)
    y = rng.random(12) * 1e5
    lo = np.arange(11, dtype=np.int64)[::-1].copy()
    hi = np.arange(12, 23, dtype=np.int64)
    al = 2.0 * np.sort(rng.random(11))[::-1].copy() * 0.49
    w = rng.random(60)
    w /= w.sum()
    rows.append(
        (
            "wis_matrix (60x12x23)",
            _time(lambda: numpy_impl.wis_matrix(q, y, 11, lo, hi, al), args.repeats),
            _time(lambda: numba_impl.wis_matrix(q, y, 11, lo, hi, al), args.repeats),
        )
    )
    rows.append(
        (
            "combined_mean_wis (60x12x23)",
            _time(lambda: numpy_impl.combined_mean_wis(q, y, w, 11, lo, hi, al), args.repeats),
            _time(lambda: numba_impl.combined_mean_wis(q, y, w, 11, lo, hi, al), args.repeats),
        )
    )

    # Trees on a 60-row x 22-feature imputation design.
    X = np.ascontiguousarray(rng.random((60, 22)) * 1e5)
    yv = X[:, 0] * 0.4 + rng.normal(0, 1e3, 60)
    pool = rng.random((121, 44))
    for mode, name in ((0, "tree_fit exact (60x22)"), (1, "tree_fit randomized (60x22)")):
        rows.append(
            (
                name,
                _time(lambda: numpy_impl.tree_fit(X, yv, 8, 2, mode, 22, pool), args.repeats),
                _time(lambda: numba_impl.tree_fit(X, yv, 8, 2, mode, 22, pool), args.repeats),
            )
        )
    tree = numba_impl.tree_fit(X, yv, 8, 2, 0, 22, pool)
    Xq = np.ascontiguousarray(rng.random((40, 22)) * 1e5)
    rows.append(
        (
            "tree_predict (40 queries)",
            _time(lambda: numpy_impl.tree_predict(*tree, Xq), args.repeats),
            _time(lambda: numba_impl.tree_predict(*tree, Xq), args.repeats),
        )
    )

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(
            f"{name:<{width}}  {t_np * 1e6:>10.1f}us  {t_nb * 1e6:>10.1f}us  "
            f"{t_np / t_nb:>7.1f}x"
        )


if __name__ == "__main__":
    main()

"""Filling absent forecasts inside one target's quantile slice.

Missing forecasts are imputed per target: a slice holds the R x K grid of
quantile values submitted by the surviving models for a single target, with
per-row presence flags (models miss whole targets, never single quantiles).
Five techniques are supported. Mean and median fill each column from its
present values alone; the three regression techniques (Bayesian ridge,
decision tree, extremely randomized trees) treat each quantile column as a
function of the remaining columns and run a chained-equation sweep:

1. initialize every absent cell with its column mean;
2. visit columns by ascending original missing count (ties by index),
   clearing the visited column's initialized cells;
3. fit the regressor on rows where the column was originally present and
   predict the absent ones;
4. move to the next column, sweeping until the largest relative change of
   any imputed cell drops below ``rel_tolerance`` or ``max_iterations``
   sweeps have run.

Imputed rows are sorted ascending before the slice is returned, so every
output row is a valid quantile vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CannotImputeError
from .regressors import BayesianRidge, DecisionTree, ExtraTrees

__all__ = [
    "TECHNIQUES",
    "REGRESSION_TECHNIQUES",
    "ImputerConfig",
    "TargetQuantileSlice",
    "repair_monotonicity",
    "lower_median",
    "fit_regressor_predict",
    "chained_equations",
    "impute_slice",
]

TECHNIQUES = ("mean", "median", "bayesian-ridge", "decision-tree", "extra-trees")
REGRESSION_TECHNIQUES = ("bayesian-ridge", "decision-tree", "extra-trees")


@dataclass(frozen=True)
class ImputerConfig:
    technique: str = "mean"
    max_iterations: int = 10
    rel_tolerance: float = 1e-3
    seed: int = 0
    tree_max_depth: int = 8
    tree_min_leaf: int = 2
    ert_n_trees: int = 10
    ert_feature_fraction: float = 1.0
    br_hyperpriors: tuple = (1.0, 1e-6, 1e-6)

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}; choose from {TECHNIQUES}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.rel_tolerance <= 0.0:
            raise ValueError("rel_tolerance must be positive")
        if self.tree_max_depth < 1 or self.tree_min_leaf < 1 or self.ert_n_trees < 1:
            raise ValueError("tree parameters must be positive")
        if not 0.0 < self.ert_feature_fraction <= 1.0:
            raise ValueError("ert_feature_fraction must lie in (0, 1]")
        if len(self.br_hyperpriors) != 3 or any(h <= 0.0 for h in self.br_hyperpriors):
            raise ValueError("br_hyperpriors must be three positive numbers")


@dataclass(frozen=True)
class TargetQuantileSlice:
    """One target's R x K quantile grid with per-row presence flags."""

    rows: tuple
    q: np.ndarray
    present: np.ndarray

    def __init__(self, rows: Sequence[str], q: np.ndarray, present: np.ndarray):
        object.__setattr__(self, "rows", tuple(rows))
        q = np.array(q, dtype=float)
        present = np.array(present, dtype=bool)
        if q.ndim != 2 or q.shape[0] != len(self.rows) or present.shape != (q.shape[0],):
            raise ValueError("slice arrays must be (R, K) values and (R,) flags")
        if np.any(np.diff(q[present], axis=1) < 0.0):
            raise ValueError("present rows must be non-decreasing across quantiles")
        q.flags.writeable = False
        present.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "present", present)

    @property
    def n_rows(self) -> int:
        return self.q.shape[0]

    @property
    def n_levels(self) -> int:
        return self.q.shape[1]

    @property
    def n_present(self) -> int:
        return int(self.present.sum())

    @property
    def all_present(self) -> bool:
        return bool(self.present.all())


def repair_monotonicity(values: Sequence[float]) -> np.ndarray:
    """Sort a quantile vector ascending; the value multiset is preserved."""
    return np.sort(np.asarray(values, dtype=float))


def lower_median(values: np.ndarray) -> float:
    """Smallest value whose empirical CDF reaches 1/2."""
    s = np.sort(np.asarray(values, dtype=float))
    if s.size == 0:
        raise CannotImputeError("median of empty column")
    return float(s[(s.size + 1) // 2 - 1])


def fit_regressor_predict(
    technique: str,
    X: np.ndarray,
    y: np.ndarray,
    X_query: np.ndarray,
    config: ImputerConfig,
    rng: "np.random.Generator | None" = None,
) -> np.ndarray:
    """Fit the technique's regressor on (X, y) and predict at X_query."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    X_query = np.asarray(X_query, dtype=float)
    if X.shape[0] == 0:
        raise CannotImputeError("empty training set")
    if technique == "bayesian-ridge":
        lam, shape, rate = config.br_hyperpriors
        model = BayesianRidge(lambda_init=lam, gamma_shape=shape, gamma_rate=rate)
    elif technique == "decision-tree":
        model = DecisionTree(max_depth=config.tree_max_depth, min_leaf=config.tree_min_leaf)
    elif technique == "extra-trees":
        model = ExtraTrees(
            n_trees=config.ert_n_trees,
            max_depth=config.tree_max_depth,
            min_leaf=config.tree_min_leaf,
            feature_fraction=config.ert_feature_fraction,
            rng=rng if rng is not None else np.random.default_rng(config.seed),
        )
    else:
        raise ValueError(f"not a regression technique: {technique!r}")
    return model.fit(X, y).predict(X_query)


def _column_means(q: np.ndarray, present: np.ndarray) -> np.ndarray:
    return q[present].mean(axis=0)


def chained_equations(
    slice_: TargetQuantileSlice,
    config: ImputerConfig,
    log: "list | None" = None,
) -> TargetQuantileSlice:
    """Regression-impute absent rows by iterated column-wise prediction.

    Present rows are returned bit-exact; imputed rows are sorted ascending
    on exit so the returned slice satisfies the quantile-row invariant. A
    regressor failure on a column falls back to that column's present mean
    and is recorded in ``log``.
    """
    if config.technique not in REGRESSION_TECHNIQUES:
        raise ValueError(f"chained equations needs a regression technique, got {config.technique!r}")
    if slice_.n_present == 0:
        raise CannotImputeError("cannot impute a slice with zero present rows")
    if slice_.all_present:
        return slice_

    present = slice_.present
    absent = ~present
    n_levels = slice_.n_levels
    work = slice_.q.copy()

    # Step 1: mean-initialize all absent cells.
    work[absent] = _column_means(slice_.q, present)

    # Step 2: visit order by ascending original missing count, ties by index.
    # Rows go missing whole, so the count is the same everywhere; the general
    # rule is kept for clarity.
    missing_counts = np.full(n_levels, int(absent.sum()))
    visit_order = sorted(range(n_levels), key=lambda k: (missing_counts[k], k))

    rng = np.random.default_rng(config.seed)
    train_rows = np.where(present)[0]
    query_rows = np.where(absent)[0]
    others = {k: [c for c in range(n_levels) if c != k] for k in visit_order}

    # Rows go missing whole, so training rows are fully observed and each
    # column's regressor sees identical training data every sweep: fit once
    # per column, re-predict as the query features update.
    models: dict = {}
    failed: set = set()
    converged = False
    sweeps = 0
    max_rel_change = np.inf
    for sweep in range(config.max_iterations):
        sweeps = sweep + 1
        previous = work[query_rows].copy()
        for k in visit_order:
            y_train = work[train_rows, k]
            if k in failed:
                work[query_rows, k] = float(y_train.mean())
                continue
            X_query = work[np.ix_(query_rows, others[k])]
            try:
                if k not in models:
                    X_train = work[np.ix_(train_rows, others[k])]
                    models[k] = _fit_model(config, X_train, y_train, rng)
                preds = models[k].predict(X_query)
                if not np.all(np.isfinite(preds)):
                    raise FloatingPointError("non-finite regression prediction")
            except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
                failed.add(k)
                preds = np.full(query_rows.size, float(y_train.mean()))
                if log is not None:
                    log.append(
                        {
                            "event": "regressor-fallback",
                            "technique": config.technique,
                            "column": int(k),
                            "reason": str(exc),
                        }
                    )
            work[query_rows, k] = preds
        changes = np.abs(work[query_rows] - previous) / (np.abs(work[query_rows]) + 1.0)
        max_rel_change = float(changes.max()) if changes.size else 0.0
        if max_rel_change < config.rel_tolerance:
            converged = True
            break
    if log is not None:
        log.append(
            {
                "event": "chained-equations",
                "technique": config.technique,
                "sweeps": sweeps,
                "converged": converged,
                "max_rel_change": max_rel_change,
            }
        )

    out = slice_.q.copy()
    out[query_rows] = np.sort(work[query_rows], axis=1)
    return TargetQuantileSlice(slice_.rows, out, np.ones(slice_.n_rows, dtype=bool))


def _fit_model(config: ImputerConfig, X_train, y_train, rng):
    """Fitted regressor for one column, reused across sweeps."""
    if config.technique == "bayesian-ridge":
        lam, shape, rate = config.br_hyperpriors
        model = BayesianRidge(lambda_init=lam, gamma_shape=shape, gamma_rate=rate)
    elif config.technique == "decision-tree":
        model = DecisionTree(max_depth=config.tree_max_depth, min_leaf=config.tree_min_leaf)
    else:
        model = ExtraTrees(
            n_trees=config.ert_n_trees,
            max_depth=config.tree_max_depth,
            min_leaf=config.tree_min_leaf,
            feature_fraction=config.ert_feature_fraction,
            rng=rng,
        )
    return model.fit(X_train, y_train)


def impute_slice(
    slice_: TargetQuantileSlice,
    config: ImputerConfig,
    log: "list | None" = None,
) -> TargetQuantileSlice:
    """Return the slice with every absent row filled by the configured technique.

    Mean/median fill each absent cell from that column's present values;
    regression techniques delegate to :func:`chained_equations`. A slice with
    nothing absent is returned unchanged; previously present rows are never
    modified.
    """
    if slice_.all_present:
        return slice_
    if slice_.n_present == 0:
        raise CannotImputeError("cannot impute a slice with zero present rows")

    if config.technique in REGRESSION_TECHNIQUES:
        return chained_equations(slice_, config, log=log)

    present = slice_.present
    if config.technique == "mean":
        fill = _column_means(slice_.q, present)
    else:
        fill = np.array([lower_median(slice_.q[present, k]) for k in range(slice_.n_levels)])
    out = slice_.q.copy()
    out[~present] = repair_monotonicity(fill)
    return TargetQuantileSlice(slice_.rows, out, np.ones(slice_.n_rows, dtype=bool))

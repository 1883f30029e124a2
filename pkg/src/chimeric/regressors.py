"""Regression backends for forecast imputation.

Three small regressors, matching the imputation techniques that need a
fitted model: Bayesian ridge regression with Gamma hyperpriors optimized by
evidence iteration, a single variance-minimizing decision tree, and an
ensemble of extremely randomized trees (random thresholds, feature
subsampling, bootstrapped rows). Tree fitting dispatches to the kernel
backend; the Bayesian ridge is plain linear algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CannotImputeError

__all__ = ["BayesianRidge", "DecisionTree", "ExtraTrees"]

_PRECISION_FLOOR = 1e-12
_PRECISION_CEIL = 1e12


@dataclass
class BayesianRidge:
    """Linear model with N(0, 1/lambda) slope prior and Gamma hyperpriors.

    The slope precision lambda and the noise precision both carry
    Gamma(shape, rate) hyperpriors and are updated by fixed-point evidence
    iteration (at most ``max_iter`` steps). Features and targets are
    centered so the intercept is the unpenalized training mean; constant
    predictors therefore collapse exactly to mean prediction. Prediction
    returns the posterior predictive mean.
    """

    lambda_init: float = 1.0
    gamma_shape: float = 1e-6
    gamma_rate: float = 1e-6
    max_iter: int = 300
    tol: float = 1e-8

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BayesianRidge":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise CannotImputeError("empty training set")
        n, p = X.shape
        self.x_mean_ = X.mean(axis=0) if p else np.zeros(0)
        self.y_mean_ = float(y.mean())
        if p == 0:
            self.coef_ = np.zeros(0)
            self.lambda_ = self.lambda_init
            self.noise_precision_ = 1.0
            return self
        Xc = X - self.x_mean_
        yc = y - self.y_mean_

        # One symmetric eigendecomposition up front turns every fixed-point
        # step into O(p^2) work in the eigenbasis.
        dtd = Xc.T @ Xc
        dty = Xc.T @ yc
        eigvals, vecs = np.linalg.eigh(dtd)
        eigvals = np.clip(eigvals, 0.0, None)
        b = vecs.T @ dty
        Xv = Xc @ vecs
        # Rank-deficient designs: b is exactly zero along null directions in
        # exact arithmetic; drop the numerical residue so those coefficients
        # stay at the prior mean instead of exploding as lambda shrinks.
        cutoff = np.finfo(float).eps * max(float(eigvals.max(initial=0.0)), 1.0) * max(n, p)
        null_dirs = eigvals <= cutoff
        eigvals[null_dirs] = 0.0
        b[null_dirs] = 0.0

        y_var = float(yc.var())
        noise = 1.0 / y_var if y_var > 0.0 else 1.0
        lam = self.lambda_init
        a0, b0 = self.gamma_shape, self.gamma_rate

        coef_eig = np.zeros(p)
        for _ in range(self.max_iter):
            denom = noise * eigvals + lam
            coef_new = noise * b / denom
            gamma_eff = float(np.sum(noise * eigvals / denom))
            sse = float(np.sum((yc - Xv @ coef_new) ** 2))
            lam_new = (gamma_eff + 2.0 * a0) / (float(coef_new @ coef_new) + 2.0 * b0)
            noise_new = (n - gamma_eff + 2.0 * a0) / (sse + 2.0 * b0)
            lam_new = min(max(lam_new, _PRECISION_FLOOR), _PRECISION_CEIL)
            noise_new = min(max(noise_new, _PRECISION_FLOOR), _PRECISION_CEIL)
            done = float(np.abs(coef_new - coef_eig).sum()) < self.tol
            coef_eig, lam, noise = coef_new, lam_new, noise_new
            if done:
                break
        # Final pass so the coefficients reflect the converged precisions.
        coef_eig = noise * b / (noise * eigvals + lam)
        self.coef_ = vecs @ coef_eig
        self.lambda_ = lam
        self.noise_precision_ = noise
        return self

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        Xq = np.asarray(Xq, dtype=float)
        if self.coef_.size == 0:
            return np.full(Xq.shape[0], self.y_mean_)
        return self.y_mean_ + (Xq - self.x_mean_) @ self.coef_


class DecisionTree:
    """Regression tree whose leaves predict the training mean of their partition."""

    def __init__(self, max_depth: int = 8, min_leaf: int = 2):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise CannotImputeError("empty training set")
        empty_pool = np.zeros((1, 2 * X.shape[1]))
        self.tree_ = kernels.tree_fit(
            X, y, self.max_depth, self.min_leaf, 0, X.shape[1], empty_pool
        )
        return self

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        Xq = np.ascontiguousarray(Xq, dtype=float)
        return kernels.tree_predict(*self.tree_, Xq)


class ExtraTrees:
    """Averaged randomized trees: random split thresholds, seeded subsampling.

    Each tree trains on a bootstrap sample of the rows and, at every node,
    examines a random subset of ceil(feature_fraction * P) features with one
    uniform threshold drawn per feature. All randomness is pre-drawn from
    ``rng`` in a fixed order, so results are reproducible and identical
    across kernel backends.
    """

    def __init__(
        self,
        n_trees: int = 10,
        max_depth: int = 8,
        min_leaf: int = 2,
        feature_fraction: float = 1.0,
        rng: "np.random.Generator | None" = None,
    ):
        if not 0.0 < feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if n_trees < 1:
            raise ValueError("n_trees must be positive")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_fraction = feature_fraction
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ExtraTrees":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise CannotImputeError("empty training set")
        n, p = X.shape
        k = max(1, math.ceil(self.feature_fraction * p))
        max_nodes = 2 * n + 1
        self.trees_ = []
        for _ in range(self.n_trees):
            boot = self.rng.integers(0, n, size=n)
            pool = self.rng.random((max_nodes, 2 * p))
            self.trees_.append(
                kernels.tree_fit(
                    np.ascontiguousarray(X[boot]),
                    np.ascontiguousarray(y[boot]),
                    self.max_depth,
                    self.min_leaf,
                    1,
                    k,
                    pool,
                )
            )
        return self

    def predict(self, Xq: np.ndarray) -> np.ndarray:
        Xq = np.ascontiguousarray(Xq, dtype=float)
        total = np.zeros(Xq.shape[0])
        for tree in self.trees_:
            total += kernels.tree_predict(*tree, Xq)
        return total / self.n_trees

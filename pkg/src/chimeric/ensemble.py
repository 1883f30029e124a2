"""Quantile averaging and performance-based weight fitting.

Ensembles combine forecasts level-by-level: the ensemble's quantile at
level k is the weighted mean of the member models' level-k quantiles under
a simplex weight vector (non-negative, summing to one). Weights are either
equal or fitted by differential evolution to minimize the mean WIS over
historical resolved targets: candidates evolve by rand/1 mutation and
binomial crossover, negative entries are clipped to zero, and every
candidate is evaluated after normalizing onto the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .core import ForecastMatrix, Target, TruthSet
from .errors import MustImputeFirstError
from .scoring import decompose_levels

__all__ = [
    "WeightVector",
    "DEConfig",
    "EnsembleForecast",
    "quantile_average",
    "differential_evolution_minimize",
    "fit_performance_weights",
]

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class WeightVector:
    """Simplex weights, one per model row."""

    weights: np.ndarray

    def __init__(self, weights: Sequence[float]):
        arr = np.array(weights, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("weights must be a non-empty 1-D vector")
        if np.any(arr < -_SIMPLEX_TOL) or np.any(arr > 1.0 + _SIMPLEX_TOL):
            raise ValueError("weights must lie in [0, 1]")
        if abs(float(arr.sum()) - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1, got {arr.sum()}")
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    @classmethod
    def equal(cls, m: int) -> "WeightVector":
        if m < 1:
            raise ValueError("need at least one model")
        return cls(np.full(m, 1.0 / m))

    def __len__(self) -> int:
        return self.weights.size

    def __getitem__(self, i: int) -> float:
        return float(self.weights[i])


@dataclass(frozen=True)
class DEConfig:
    """Differential evolution settings.

    ``sequential_update`` switches from generation-batched replacement to
    the classic in-place variant where accepted candidates immediately join
    the donor pool within the same generation.
    """

    population_size: int = 4
    mutation: float = 0.8
    crossover: float = 0.9
    max_generations: int = 200
    stall_generations: int = 30
    objective_tolerance: float = 1e-8
    seed: int = 0
    sequential_update: bool = False

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4 (3 mutation partners + base)")
        if self.mutation <= 0.0:
            raise ValueError("mutation must be positive")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover must lie in [0, 1]")
        if self.max_generations < 1 or self.stall_generations < 1:
            raise ValueError("generation counts must be positive")
        if self.objective_tolerance < 0.0:
            raise ValueError("objective_tolerance must be non-negative")


@dataclass(frozen=True)
class EnsembleForecast:
    """Combined per-target quantiles plus the weights that produced them."""

    targets: tuple
    level_sets: tuple
    quantiles: tuple
    weights_used: WeightVector
    label: str

    def __post_init__(self):
        if not (len(self.targets) == len(self.level_sets) == len(self.quantiles)):
            raise ValueError("targets, level_sets and quantiles must align")
        for target, ls, q in zip(self.targets, self.level_sets, self.quantiles):
            if len(q) != len(ls):
                raise ValueError(f"quantile count mismatch for {target.label()}")
            if np.any(np.diff(q) < 0.0):
                raise ValueError(f"ensemble quantiles not monotone for {target.label()}")

    def quantiles_for(self, target: Target) -> np.ndarray:
        return self.quantiles[self.targets.index(target)]


def quantile_average(
    matrix: ForecastMatrix,
    weights: "WeightVector | Sequence[float]",
    label: str = "chimeric",
) -> EnsembleForecast:
    """Convex per-level combination of all rows of a fully present matrix.

    Convexity of the weights guarantees each output target block is
    non-decreasing. Degenerate weights reproduce the selected row exactly.
    """
    if not isinstance(weights, WeightVector):
        weights = WeightVector(weights)
    if len(weights) != matrix.n_models:
        raise ValueError(
            f"{len(weights)} weights for {matrix.n_models} models"
        )
    if not matrix.is_fully_present:
        raise MustImputeFirstError("matrix has absent cells; impute before averaging")
    combined = weights.weights @ matrix.cells
    # Convexity makes each block monotone in exact arithmetic; BLAS rounding
    # is column-position dependent and can wiggle ties by one ulp, so clamp.
    # Monotone input (e.g. a degenerate weight's selected row) is unchanged.
    quantiles = tuple(
        np.maximum.accumulate(combined[matrix.col_offsets[t] : matrix.col_offsets[t + 1]])
        for t in range(matrix.n_targets)
    )
    return EnsembleForecast(
        targets=matrix.targets,
        level_sets=matrix.level_sets,
        quantiles=quantiles,
        weights_used=weights,
        label=label,
    )


def _normalize(raw: np.ndarray) -> np.ndarray:
    s = raw.sum()
    if s <= 0.0:
        return np.full(raw.size, 1.0 / raw.size)
    return raw / s


def differential_evolution_minimize(
    objective: Callable, m: int, config: DEConfig = DEConfig()
) -> tuple:
    """Minimize a simplex objective; returns (best WeightVector, objective).

    Raw population vectors evolve unconstrained above zero; normalization
    onto the simplex happens at evaluation time. Replacement is greedy
    (strictly lower objective), so the best objective is non-increasing
    across generations. Stops at ``max_generations`` or after
    ``stall_generations`` consecutive generations without an improvement of
    at least ``objective_tolerance``.
    """
    if m < 1:
        raise ValueError("dimension must be positive")
    if m == 1:
        w = WeightVector([1.0])
        return w, float(objective(w))

    rng = np.random.default_rng(config.seed)
    pop = rng.random((config.population_size, m))
    energies = np.array([float(objective(WeightVector(_normalize(v)))) for v in pop])

    best_i = int(np.argmin(energies))
    best_obj = float(energies[best_i])
    best_raw = pop[best_i].copy()

    stall = 0
    for _ in range(config.max_generations):
        prev_best = best_obj
        replacements = []
        for i in range(config.population_size):
            partners = rng.permutation(config.population_size - 1)[:3]
            partners = partners + (partners >= i)
            r1, r2, r3 = partners
            mutant = pop[r1] + config.mutation * (pop[r2] - pop[r3])
            cross = rng.random(m) < config.crossover
            cross[rng.integers(m)] = True
            trial = np.where(cross, mutant, pop[i])
            np.clip(trial, 0.0, None, out=trial)
            energy = float(objective(WeightVector(_normalize(trial))))
            if energy < energies[i]:
                if config.sequential_update:
                    pop[i] = trial
                    energies[i] = energy
                else:
                    replacements.append((i, trial, energy))
                if energy < best_obj:
                    best_obj = energy
                    best_raw = trial.copy()
        for i, trial, energy in replacements:
            pop[i] = trial
            energies[i] = energy
        if prev_best - best_obj < config.objective_tolerance:
            stall += 1
            if stall >= config.stall_generations:
                break
        else:
            stall = 0
    return WeightVector(_normalize(best_raw)), best_obj


def _resolved_groups(matrix: ForecastMatrix, truths: TruthSet):
    """Rectangular (q, y, decomposition) batches of resolved targets, by level set."""
    groups: dict = {}
    for t in range(matrix.n_targets):
        if matrix.targets[t] in truths:
            groups.setdefault(matrix.level_sets[t].levels, []).append(t)
    batches = []
    for levels, ts in groups.items():
        for t in ts:
            if not matrix.mask[:, t].all():
                raise MustImputeFirstError(
                    f"absent forecasts for resolved target {matrix.targets[t].label()}"
                )
        decomp = decompose_levels(levels)
        q = np.ascontiguousarray(np.stack([matrix.target_block(t) for t in ts], axis=1))
        y = np.array([truths.get(matrix.targets[t]) for t in ts], dtype=float)
        batches.append((q, y, decomp.as_arrays(), len(ts)))
    return batches


def fit_performance_weights(
    matrix: ForecastMatrix, truths: TruthSet, config: DEConfig = DEConfig()
) -> WeightVector:
    """Weights minimizing mean WIS of the combined forecast over resolved targets.

    With no resolved history the documented fallback is equal weights.
    """
    batches = _resolved_groups(matrix, truths)
    if not batches:
        return WeightVector.equal(matrix.n_models)
    total_targets = sum(n for *_, n in batches)

    def objective(wv: WeightVector) -> float:
        acc = 0.0
        for q, y, (median_idx, lo_idx, hi_idx, alphas), n in batches:
            acc += n * kernels.combined_mean_wis(
                q, y, wv.weights, median_idx, lo_idx, hi_idx, alphas
            )
        return acc / total_targets

    weights, _ = differential_evolution_minimize(objective, matrix.n_models, config)
    return weights

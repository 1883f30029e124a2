"""Domain types and matrix assembly for quantile forecasts.

A forecast for one target is a set of values at fixed probability levels.
Forecasts from many models over many targets are packed into a
:class:`ForecastMatrix` (one row per model, one column block of K quantiles
per target) together with a per-(model, target) presence mask; scores live
in a parallel :class:`ScoreMatrix`. Inclusion strategies decide which rows
enter an ensemble given their missingness pattern.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataFormatError, DuplicateForecastError, NoEligibleModelsError

__all__ = [
    "CASES",
    "DEATHS",
    "CASE_LEVELS",
    "DEATH_LEVELS",
    "COMPUTATIONAL",
    "METACULUS",
    "GJO",
    "HUMAN_PROVENANCES",
    "COMPLETE_CASE",
    "SPOTTY_MEMORY",
    "DEFER_TO_CROWD",
    "INCLUSION_STRATEGIES",
    "Target",
    "QuantileLevelSet",
    "QuantileForecast",
    "ForecastMatrix",
    "TruthSet",
    "ScoreMatrix",
    "Finding",
    "ValidationReport",
    "required_levels_for",
    "validate_quantile_forecast",
    "assemble_matrices",
    "survivor_indices",
    "apply_inclusion_strategy",
]

CASES = "incident-cases"
DEATHS = "incident-deaths"

# Hub submission formats: 7 levels for weekly cases, 23 for weekly deaths.
CASE_LEVELS = (0.025, 0.100, 0.250, 0.500, 0.750, 0.900, 0.975)
DEATH_LEVELS = tuple(
    sorted([0.01, 0.025, 0.975, 0.99] + [round(0.05 * i, 2) for i in range(1, 20)])
)

COMPUTATIONAL = "computational"
METACULUS = "metaculus"
GJO = "gjo"
HUMAN_PROVENANCES = (METACULUS, GJO)

COMPLETE_CASE = "complete-case"
SPOTTY_MEMORY = "spotty-memory"
DEFER_TO_CROWD = "defer-to-crowd"
INCLUSION_STRATEGIES = (COMPLETE_CASE, SPOTTY_MEMORY, DEFER_TO_CROWD)

_LEVEL_TOL = 1e-9


@dataclass(frozen=True, order=True)
class Target:
    """One forecasting question: a variable at a location resolving on a week-ending date."""

    variable: str
    location: str
    target_end_date: dt.date
    horizon_weeks: int

    def __post_init__(self):
        if not self.variable:
            raise ValueError("target variable must be non-empty")
        if self.horizon_weeks < 1:
            raise ValueError(f"horizon_weeks must be positive, got {self.horizon_weeks}")

    @property
    def is_count_variable(self) -> bool:
        return self.variable in (CASES, DEATHS)

    def truth_key(self) -> tuple:
        """Identity under which ground truth is shared (horizon excluded)."""
        return (self.variable, self.location, self.target_end_date)

    def label(self) -> str:
        return f"{self.variable}/{self.location}/{self.target_end_date.isoformat()}/{self.horizon_weeks}wk"


def required_levels_for(variable: str) -> "QuantileLevelSet | None":
    """The fixed level set a variable's forecasts must use, if any."""
    if variable == CASES:
        return QuantileLevelSet(CASE_LEVELS)
    if variable == DEATHS:
        return QuantileLevelSet(DEATH_LEVELS)
    return None


@dataclass(frozen=True)
class QuantileLevelSet:
    """Strictly increasing probability levels, symmetric about the median."""

    levels: tuple

    def __init__(self, levels: Iterable[float]):
        object.__setattr__(self, "levels", tuple(float(p) for p in levels))
        lv = self.levels
        if not lv:
            raise ValueError("level set must be non-empty")
        arr = np.asarray(lv)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("levels must lie strictly inside (0, 1)")
        if np.any(np.diff(arr) <= 0.0):
            raise ValueError("levels must be strictly increasing")
        if not np.any(np.abs(arr - 0.5) <= _LEVEL_TOL):
            raise ValueError("level set must contain the median level 0.5")
        # Symmetry: the set reversed and reflected about 0.5 must match.
        if not np.allclose(arr, 1.0 - arr[::-1], atol=_LEVEL_TOL, rtol=0.0):
            raise ValueError("levels must be symmetric about 0.5")

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    @property
    def median_index(self) -> int:
        return int(np.argmin(np.abs(np.asarray(self.levels) - 0.5)))

    def matches(self, other: "QuantileLevelSet") -> bool:
        if len(self) != len(other):
            return False
        return np.allclose(self.levels, other.levels, atol=_LEVEL_TOL, rtol=0.0)


@dataclass(frozen=True)
class QuantileForecast:
    """One model's prediction for one target as values at fixed levels.

    Structural consistency (matching lengths) is enforced here. Ordering and
    sign violations are reported by :func:`validate_quantile_forecast` as
    findings, not construction failures, so raw submissions can be inspected.
    """

    model_id: str
    target: Target
    levels: QuantileLevelSet
    values: tuple
    provenance: str = COMPUTATIONAL
    forecast_date: "dt.date | None" = None

    def __init__(self, model_id, target, levels, values, provenance=COMPUTATIONAL, forecast_date=None):
        object.__setattr__(self, "model_id", str(model_id))
        object.__setattr__(self, "target", target)
        if not isinstance(levels, QuantileLevelSet):
            levels = QuantileLevelSet(levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", tuple(float(v) for v in values))
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "forecast_date", forecast_date)
        if len(self.values) != len(self.levels):
            raise ValueError(
                f"{self.model_id}: {len(self.values)} values for {len(self.levels)} levels"
            )

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0.0))


@dataclass(frozen=True)
class Finding:
    """One validation defect; findings are data, not exceptions."""

    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    model_id: str
    target: Target
    findings: tuple

    @property
    def is_valid(self) -> bool:
        return not self.findings


def validate_quantile_forecast(
    forecast: QuantileForecast, required: QuantileLevelSet
) -> ValidationReport:
    """Check a forecast against a required level set.

    An empty findings list means: levels match ``required`` exactly, values
    are non-decreasing, and (for count variables) non-negative.
    """
    findings = []
    if not forecast.levels.matches(required):
        findings.append(
            Finding(
                "level-set-mismatch",
                f"expected {len(required)} levels {list(required)}, got {list(forecast.levels)}",
            )
        )
    values = np.asarray(forecast.values)
    drops = np.where(np.diff(values) < 0.0)[0]
    for i in drops:
        findings.append(Finding("non-monotone", f"non-monotone at index {i + 1}"))
    if forecast.target.is_count_variable:
        for i in np.where(values < 0.0)[0]:
            findings.append(Finding("negative-value", f"negative value at index {i}"))
    return ValidationReport(forecast.model_id, forecast.target, tuple(findings))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ForecastMatrix:
    """All forecasts packed model-by-row, target-major column blocks.

    ``cells`` has one row per model and one column per (target, level) pair,
    grouped by target; absent blocks are NaN. ``mask[i, t]`` is True when
    model i submitted target t. Arrays are read-only after construction.
    """

    models: tuple
    provenance: tuple
    targets: tuple
    level_sets: tuple
    cells: np.ndarray
    mask: np.ndarray
    col_offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = np.array([len(ls) for ls in self.level_sets], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(ks)])
        object.__setattr__(self, "col_offsets", _freeze(offsets))
        m, t = len(self.models), len(self.targets)
        if len(self.provenance) != m:
            raise ValueError("provenance must align with models")
        if len(self.level_sets) != t:
            raise ValueError("level_sets must align with targets")
        if self.cells.shape != (m, offsets[-1]):
            raise ValueError(f"cells shape {self.cells.shape} != ({m}, {offsets[-1]})")
        if self.mask.shape != (m, t):
            raise ValueError(f"mask shape {self.mask.shape} != ({m}, {t})")
        if len(set(self.models)) != m:
            raise ValueError("duplicate model ids")
        for ti in range(t):
            block = self.cells[:, offsets[ti] : offsets[ti + 1]]
            present = self.mask[:, ti]
            if np.any(np.isnan(block[present])):
                raise ValueError(f"target {ti}: present block contains NaN")
            if not np.all(np.isnan(block[~present])):
                raise ValueError(f"target {ti}: absent block contains values")
            if np.any(np.diff(block[present], axis=1) < 0.0):
                raise ValueError(f"target {ti}: present rows must be non-decreasing")
        _freeze(self.cells)
        _freeze(self.mask)

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def is_fully_present(self) -> bool:
        return bool(self.mask.all())

    def target_block(self, t: int) -> np.ndarray:
        return self.cells[:, self.col_offsets[t] : self.col_offsets[t + 1]]

    def target_index(self, target: Target) -> int:
        return self.targets.index(target)

    def model_index(self, model_id: str) -> int:
        return self.models.index(model_id)

    def with_rows(self, row_indices: Sequence[int]) -> "ForecastMatrix":
        """Row-filtered copy; never reorders survivors or touches cells."""
        rows = list(row_indices)
        return ForecastMatrix(
            models=tuple(self.models[i] for i in rows),
            provenance=tuple(self.provenance[i] for i in rows),
            targets=self.targets,
            level_sets=self.level_sets,
            cells=self.cells[rows].copy(),
            mask=self.mask[rows].copy(),
        )

    def with_targets(self, target_indices: Sequence[int]) -> "ForecastMatrix":
        """Column-block-filtered copy preserving target order as given."""
        ts = list(target_indices)
        cols = np.concatenate(
            [np.arange(self.col_offsets[t], self.col_offsets[t + 1]) for t in ts]
        ) if ts else np.empty(0, dtype=np.int64)
        return ForecastMatrix(
            models=self.models,
            provenance=self.provenance,
            targets=tuple(self.targets[t] for t in ts),
            level_sets=tuple(self.level_sets[t] for t in ts),
            cells=self.cells[:, cols].copy(),
            mask=self.mask[:, ts].copy(),
        )

    def to_forecasts(self) -> list:
        """Unpack present blocks back into QuantileForecast records."""
        out = []
        for i, model in enumerate(self.models):
            for t, target in enumerate(self.targets):
                if self.mask[i, t]:
                    out.append(
                        QuantileForecast(
                            model_id=model,
                            target=target,
                            levels=self.level_sets[t],
                            values=tuple(self.target_block(t)[i]),
                            provenance=self.provenance[i],
                        )
                    )
        return out

    def bytes_equal(self, other: "ForecastMatrix") -> bool:
        return (
            self.models == other.models
            and self.provenance == other.provenance
            and self.targets == other.targets
            and self.level_sets == other.level_sets
            and self.cells.tobytes() == other.cells.tobytes()
            and self.mask.tobytes() == other.mask.tobytes()
        )


class TruthSet:
    """Realized values keyed by target identity (horizon-insensitive).

    Truths are final within a run: registering two different values for the
    same key is rejected.
    """

    def __init__(self, records: "Mapping | Iterable[tuple]" = ()):
        self._records: dict = {}
        items = records.items() if isinstance(records, Mapping) else records
        for key, value in items:
            self.add(key, value)

    @staticmethod
    def _key(key) -> tuple:
        if isinstance(key, Target):
            return key.truth_key()
        variable, location, end_date = key
        return (variable, location, end_date)

    def add(self, key, value: float) -> None:
        k = self._key(key)
        value = float(value)
        if k in self._records and self._records[k] != value:
            raise DataFormatError(f"conflicting truth for {k}: {self._records[k]} vs {value}")
        self._records[k] = value

    def get(self, target) -> "float | None":
        return self._records.get(self._key(target))

    def __contains__(self, target) -> bool:
        return self._key(target) in self._records

    def __len__(self) -> int:
        return len(self._records)

    def keys(self):
        return self._records.keys()

    def items(self):
        return self._records.items()


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-(model, target) scores; NaN where forecast or truth is absent."""

    models: tuple
    targets: tuple
    scores: np.ndarray

    def __post_init__(self):
        if self.scores.shape != (len(self.models), len(self.targets)):
            raise ValueError("scores shape must be (models, targets)")
        present = self.scores[~np.isnan(self.scores)]
        if np.any(present < 0.0):
            raise ValueError("scores must be non-negative")
        _freeze(self.scores)

    def mean_by_model(self) -> np.ndarray:
        """Row means ignoring absent entries (NaN where a row has none)."""
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.scores, axis=1)

    def mean_by_target(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.scores, axis=0)


def _target_sort_key(target: Target):
    return (target.target_end_date, target.variable, target.location, target.horizon_weeks)


def assemble_matrices(
    forecasts: "Iterable[QuantileForecast]", truths: TruthSet
) -> tuple:
    """Pack validated forecasts into a ForecastMatrix; truths pass through.

    Rows are ordered by first appearance of each model id; targets
    chronologically, then by variable/location. Duplicate (model, target)
    submissions are rejected outright: revision handling belongs upstream.
    Targets without truth stay in the matrix (scoring skips them).
    """
    forecasts = list(forecasts)
    models: list = []
    provenance: dict = {}
    by_cell: dict = {}
    level_by_target: dict = {}
    for fc in forecasts:
        if fc.model_id not in provenance:
            models.append(fc.model_id)
            provenance[fc.model_id] = fc.provenance
        key = (fc.model_id, fc.target)
        if key in by_cell:
            raise DuplicateForecastError(
                f"duplicate forecast for model {fc.model_id!r}, target {fc.target.label()}"
            )
        if not fc.is_monotone:
            raise DataFormatError(
                f"unvalidated forecast (non-monotone values) for {fc.model_id!r}, "
                f"target {fc.target.label()}"
            )
        known = level_by_target.get(fc.target)
        if known is None:
            level_by_target[fc.target] = fc.levels
        elif not known.matches(fc.levels):
            raise DataFormatError(
                f"inconsistent level sets for target {fc.target.label()}"
            )
        by_cell[key] = fc

    targets = sorted(level_by_target, key=_target_sort_key)
    level_sets = tuple(level_by_target[t] for t in targets)
    offsets = np.concatenate([[0], np.cumsum([len(ls) for ls in level_sets])]).astype(np.int64)

    m, t = len(models), len(targets)
    cells = np.full((m, int(offsets[-1])), np.nan)
    mask = np.zeros((m, t), dtype=bool)
    for (model_id, target), fc in by_cell.items():
        i = models.index(model_id)
        ti = targets.index(target)
        cells[i, offsets[ti] : offsets[ti + 1]] = fc.values
        mask[i, ti] = True

    matrix = ForecastMatrix(
        models=tuple(models),
        provenance=tuple(provenance[mid] for mid in models),
        targets=tuple(targets),
        level_sets=level_sets,
        cells=cells,
        mask=mask,
    )
    return matrix, truths


def survivor_indices(
    mask: np.ndarray,
    strategy: str,
    target_surveys: np.ndarray,
    current_survey: int,
) -> np.ndarray:
    """Row indices surviving an inclusion strategy, in original order.

    complete-case requires every target submitted; spotty-memory requires
    every current-survey target submitted; defer-to-crowd requires at least
    one submission anywhere. Never reorders rows.
    """
    mask = np.asarray(mask, dtype=bool)
    target_surveys = np.asarray(target_surveys)
    if strategy == COMPLETE_CASE:
        keep = mask.all(axis=1)
    elif strategy == SPOTTY_MEMORY:
        current = target_surveys == current_survey
        keep = mask[:, current].all(axis=1)
    elif strategy == DEFER_TO_CROWD:
        keep = mask.any(axis=1)
    else:
        raise ValueError(f"unknown inclusion strategy {strategy!r}")
    return np.where(keep)[0]


def apply_inclusion_strategy(
    matrix: ForecastMatrix,
    strategy: str,
    current_survey: int,
    survey_of: "Mapping[Target, int]",
) -> ForecastMatrix:
    """Drop rows that fail the inclusion strategy's missingness rule.

    ``survey_of`` maps every matrix target to its survey index, all at or
    before ``current_survey``. Raises NoEligibleModelsError when nothing
    survives.
    """
    target_surveys = []
    for target in matrix.targets:
        if target not in survey_of:
            raise ValueError(f"target {target.label()} missing from survey_of")
        s = survey_of[target]
        if s > current_survey:
            raise ValueError(
                f"target {target.label()} belongs to survey {s} > current {current_survey}"
            )
        target_surveys.append(s)
    rows = survivor_indices(matrix.mask, strategy, np.asarray(target_surveys), current_survey)
    if rows.size == 0:
        raise NoEligibleModelsError(
            f"no eligible models under {strategy} at survey {current_survey}"
        )
    return matrix.with_rows(rows)

"""Chimeric quantile-forecast ensembles.

Combine probabilistic forecasts from computational models and human
judgment into weighted quantile-average ensembles: score with the weighted
interval score, impute missing forecasts per target, fit simplex model
weights by differential evolution against historical scores, and emit
paired evaluation reports.
"""

from .core import (
    CASES,
    DEATHS,
    CASE_LEVELS,
    DEATH_LEVELS,
    COMPLETE_CASE,
    SPOTTY_MEMORY,
    DEFER_TO_CROWD,
    ForecastMatrix,
    QuantileForecast,
    QuantileLevelSet,
    ScoreMatrix,
    Target,
    TruthSet,
    apply_inclusion_strategy,
    assemble_matrices,
    validate_quantile_forecast,
)
from .elicitation import (
    IntervalHistogram,
    LogisticMixture,
    Submission,
    interval_histogram_to_quantiles,
    logistic_mixture_to_quantiles,
    select_cutoff_submission,
)
from .ensemble import (
    DEConfig,
    EnsembleForecast,
    WeightVector,
    differential_evolution_minimize,
    fit_performance_weights,
    quantile_average,
)
from .imputation import (
    ImputerConfig,
    TargetQuantileSlice,
    chained_equations,
    fit_regressor_predict,
    impute_slice,
    repair_monotonicity,
)
from .pipeline import (
    EvaluationReport,
    RunConfig,
    SurveySpec,
    emit_report,
    load_run_config,
    run_evaluation,
)
from .scoring import (
    PairedTestResult,
    ScoreConfig,
    crps_numeric,
    interval_score,
    paired_t_test_one_sided,
    score_all,
    weighted_interval_score,
)

__version__ = "0.1.0"

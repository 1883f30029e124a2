"""Survey-by-survey evaluation pipeline and report emission.

For each survey, in order: pick every forecaster's operative revision at
the cutoff, convert elicited distributions to quantiles, assemble one
matrix per (variable, ensemble label), apply the inclusion strategy, impute
what is absent, fit or assign weights using only targets resolved before
the cutoff (no look-ahead), produce the combined forecast for the survey's
targets, and score it once truth exists. Across surveys the report collects
per-ensemble WIS series, paired difference tables between ensembles, and
one-sided paired t tests.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    COMPUTATIONAL,
    HUMAN_PROVENANCES,
    COMPLETE_CASE,
    SPOTTY_MEMORY,
    INCLUSION_STRATEGIES,
    ForecastMatrix,
    QuantileForecast,
    Target,
    TruthSet,
    apply_inclusion_strategy,
    assemble_matrices,
    required_levels_for,
)
from .elicitation import (
    IntervalHistogram,
    LogisticMixture,
    select_cutoff_submission,
    interval_histogram_to_quantiles,
    logistic_mixture_to_quantiles,
)
from .ensemble import DEConfig, WeightVector, fit_performance_weights, quantile_average
from .errors import ConfigError, NoEligibleModelsError, ReportWriteError
from .imputation import ImputerConfig, TargetQuantileSlice, impute_slice
from .io import parse_elicitation_jsonl, parse_hub_quantile_csv, parse_truth_csv
from .scoring import paired_t_test_one_sided, wis_from_values

__all__ = [
    "SCHEMA_VERSION",
    "ENSEMBLE_LABELS",
    "SurveySpec",
    "ForecastSource",
    "RunConfig",
    "EvaluationReport",
    "load_run_config",
    "derive_seed",
    "run_evaluation",
    "emit_report",
]

SCHEMA_VERSION = 1
ENSEMBLE_LABELS = ("computational", "human", "chimeric")

# Ensemble pairs reported as ordered differences first - second.
_COMPARISONS = (
    ("chimeric", "computational"),
    ("human", "computational"),
    ("chimeric", "human"),
)


@dataclass(frozen=True)
class SurveySpec:
    index: int
    cutoff: dt.datetime
    targets: tuple


@dataclass(frozen=True)
class ForecastSource:
    path: str
    provenance: str
    kind: str  # "hub-csv" | "elicitation-jsonl"


@dataclass(frozen=True)
class RunConfig:
    forecast_sources: tuple
    truth_path: str
    surveys: tuple
    ensemble_set: tuple = ENSEMBLE_LABELS
    inclusion_strategy: str = COMPLETE_CASE
    strict_joint_spotty: bool = False
    imputer: ImputerConfig = field(default_factory=ImputerConfig)
    weighting: str = "equal"
    de: DEConfig = field(default_factory=DEConfig)
    threads: int = 1
    output_dir: str = "."

    def __post_init__(self):
        if not self.forecast_sources:
            raise ConfigError("at least one forecast source is required")
        if self.inclusion_strategy not in INCLUSION_STRATEGIES:
            raise ConfigError(f"unknown inclusion strategy {self.inclusion_strategy!r}")
        if self.weighting not in ("equal", "performance"):
            raise ConfigError(f"weighting must be equal or performance, got {self.weighting!r}")
        for label in self.ensemble_set:
            if label not in ENSEMBLE_LABELS:
                raise ConfigError(f"unknown ensemble label {label!r}")
        if not self.surveys:
            raise ConfigError("at least one survey is required")
        cutoffs = [s.cutoff for s in self.surveys]
        if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
            raise ConfigError("surveys must be strictly ordered by cutoff")
        if self.threads < 1:
            raise ConfigError("threads must be positive")

    def survey_of(self) -> dict:
        out: dict = {}
        for spec in self.surveys:
            for target in spec.targets:
                if target in out:
                    raise ConfigError(f"target {target.label()} appears in two surveys")
                out[target] = spec.index
        return out


def _target_from_dict(d: Mapping) -> Target:
    return Target(
        variable=str(d["variable"]),
        location=str(d["location"]),
        target_end_date=dt.date.fromisoformat(str(d["target_end_date"])),
        horizon_weeks=int(d["horizon_weeks"]),
    )


def load_run_config(path) -> RunConfig:
    """Build a RunConfig from its JSON file representation."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    try:
        sources = tuple(
            ForecastSource(
                path=str(s["path"]),
                provenance=str(s["provenance"]),
                kind=str(
                    s.get(
                        "kind",
                        "hub-csv" if s["provenance"] == COMPUTATIONAL else "elicitation-jsonl",
                    )
                ),
            )
            for s in raw["forecast_sources"]
        )
        surveys = tuple(
            SurveySpec(
                index=int(s["index"]),
                cutoff=dt.datetime.fromisoformat(str(s["cutoff"])),
                targets=tuple(_target_from_dict(t) for t in s["targets"]),
            )
            for s in raw["surveys"]
        )
        return RunConfig(
            forecast_sources=sources,
            truth_path=str(raw["truth_path"]),
            surveys=surveys,
            ensemble_set=tuple(raw.get("ensemble_set", ENSEMBLE_LABELS)),
            inclusion_strategy=str(raw.get("inclusion_strategy", COMPLETE_CASE)),
            strict_joint_spotty=bool(raw.get("strict_joint_spotty", False)),
            imputer=ImputerConfig(**raw.get("imputer", {})),
            weighting=str(raw.get("weighting", "equal")),
            de=DEConfig(**raw.get("de", {})),
            threads=int(raw.get("threads", 1)),
            output_dir=str(raw.get("output_dir", ".")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def derive_seed(base_seed: int, *tokens) -> int:
    """Stable child seed from a base seed and arbitrary string tokens.

    Hashing keeps results independent of scheduling: every (target,
    technique) pair gets the same stream no matter which thread runs it.
    """
    digest = hashlib.sha256(repr(tokens).encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "big")
    return int(np.random.SeedSequence([base_seed & (2**63 - 1), salt]).generate_state(1)[0])


@dataclass
class EvaluationReport:
    """Everything run_evaluation learned, JSON-serializable."""

    schema_version: int
    wis_records: list
    weight_records: list
    paired_tables: list
    imputation_log: list
    config_echo: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "wis_records": self.wis_records,
            "weight_records": self.weight_records,
            "paired_tables": self.paired_tables,
            "imputation_log": self.imputation_log,
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvaluationReport":
        return cls(
            schema_version=int(d["schema_version"]),
            wis_records=list(d["wis_records"]),
            weight_records=list(d["weight_records"]),
            paired_tables=list(d["paired_tables"]),
            imputation_log=list(d["imputation_log"]),
            config_echo=dict(d["config_echo"]),
        )


def _rows_for_label(label: str):
    if label == "computational":
        return (COMPUTATIONAL,)
    if label == "human":
        return HUMAN_PROVENANCES
    return (COMPUTATIONAL,) + HUMAN_PROVENANCES


def _select_computational(forecasts, cutoff_date):
    """Hub rows usable at a cutoff: earliest forecast date per (model, target)."""
    chosen: dict = {}
    for fc in forecasts:
        if fc.forecast_date is not None and fc.forecast_date > cutoff_date:
            continue
        key = (fc.model_id, fc.target)
        held = chosen.get(key)
        if held is None or (
            fc.forecast_date is not None
            and held.forecast_date is not None
            and fc.forecast_date < held.forecast_date
        ):
            chosen[key] = fc
    return list(chosen.values())


def _convert_submissions(submissions, cutoff, provenance_of):
    """Operative revision per (forecaster, target), converted to quantiles."""
    streams: dict = {}
    for sub in submissions:
        streams.setdefault((sub.forecaster_id, sub.target), []).append(sub)
    out = []
    for (forecaster, target), stream in sorted(
        streams.items(), key=lambda kv: (kv[0][0], kv[0][1])
    ):
        stream.sort(key=lambda s: s.submitted_at)
        chosen = select_cutoff_submission(stream, cutoff)
        if chosen is None:
            continue
        levels = required_levels_for(target.variable)
        if levels is None:
            continue
        dist = chosen.distribution
        if isinstance(dist, LogisticMixture):
            values = logistic_mixture_to_quantiles(dist, levels)
        elif isinstance(dist, IntervalHistogram):
            values = interval_histogram_to_quantiles(dist, levels)
        else:
            raise ConfigError(f"unsupported distribution type {type(dist).__name__}")
        out.append(
            QuantileForecast(
                model_id=forecaster,
                target=target,
                levels=levels,
                values=tuple(values),
                provenance=provenance_of[forecaster],
            )
        )
    return out


def _impute_matrix(matrix: ForecastMatrix, config: RunConfig, log: list) -> ForecastMatrix:
    """Fill absent blocks target-by-target; parallel across targets."""
    if matrix.is_fully_present:
        return matrix

    def impute_one(t: int):
        block = matrix.target_block(t)
        present = matrix.mask[:, t]
        filled = np.where(present[:, None], block, 0.0)
        slice_ = TargetQuantileSlice(matrix.models, filled, present)
        seed = derive_seed(
            config.imputer.seed,
            matrix.targets[t].label(),
            config.imputer.technique,
        )
        local_log: list = []
        result = impute_slice(slice_, replace(config.imputer, seed=seed), log=local_log)
        for event in local_log:
            event["target"] = matrix.targets[t].label()
        return t, result.q, local_log

    todo = [t for t in range(matrix.n_targets) if not matrix.mask[:, t].all()]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(impute_one, todo))
    else:
        results = [impute_one(t) for t in todo]

    cells = matrix.cells.copy()
    for t, q, local_log in sorted(results, key=lambda r: r[0]):
        cells[:, matrix.col_offsets[t] : matrix.col_offsets[t + 1]] = q
        log.extend(local_log)
    return ForecastMatrix(
        models=matrix.models,
        provenance=matrix.provenance,
        targets=matrix.targets,
        level_sets=matrix.level_sets,
        cells=cells,
        mask=np.ones_like(matrix.mask),
    )


def _ingest(config: RunConfig):
    all_targets = [t for spec in config.surveys for t in spec.targets]
    computational = []
    submissions = []
    provenance_of: dict = {}
    diagnostics = []
    for source in config.forecast_sources:
        if source.kind == "hub-csv":
            result = parse_hub_quantile_csv(source.path, provenance=source.provenance)
            computational.extend(result.forecasts)
            diagnostics.extend(dict(d, source=source.path) for d in result.diagnostics)
        elif source.kind == "elicitation-jsonl":
            result = parse_elicitation_jsonl(source.path, all_targets)
            for sub in result.submissions:
                provenance_of.setdefault(sub.forecaster_id, source.provenance)
            submissions.extend(result.submissions)
            diagnostics.extend(dict(d, source=source.path) for d in result.diagnostics)
        else:
            raise ConfigError(f"unknown source kind {source.kind!r}")
    truths = parse_truth_csv(config.truth_path, all_targets)
    return computational, submissions, provenance_of, truths, diagnostics


def run_evaluation(config: RunConfig, truths: "TruthSet | None" = None) -> EvaluationReport:
    """Run the whole survey-ordered pipeline and aggregate comparisons.

    ``truths`` overrides the truth file when supplied (used by tests to
    inject or poison truth data).
    """
    computational, submissions, provenance_of, file_truths, diagnostics = _ingest(config)
    if truths is None:
        truths = file_truths
    survey_of = config.survey_of()

    wis_records: list = []
    weight_records: list = []
    imputation_log: list = list(diagnostics)

    for spec in config.surveys:
        cutoff_date = spec.cutoff.date()
        usable_targets = [t for t, s in survey_of.items() if s <= spec.index]
        comp_now = [
            fc
            for fc in _select_computational(computational, cutoff_date)
            if fc.target in survey_of and survey_of[fc.target] <= spec.index
        ]
        human_now = [
            fc
            for fc in _convert_submissions(submissions, spec.cutoff, provenance_of)
            if survey_of[fc.target] <= spec.index
        ]
        # Truths usable for weight fitting resolve strictly before the cutoff.
        resolved = TruthSet(
            {
                t: truths.get(t)
                for t in usable_targets
                if t in truths and t.target_end_date < cutoff_date
            }
        )
        variables = sorted({t.variable for t in spec.targets})
        for label in config.ensemble_set:
            rows = _rows_for_label(label)
            pool = [fc for fc in comp_now + human_now if fc.provenance in rows]
            for variable in variables:
                try:
                    record = _run_cell(
                        config,
                        spec,
                        variable,
                        label,
                        pool,
                        survey_of,
                        resolved,
                        truths,
                        imputation_log,
                    )
                except NoEligibleModelsError as exc:
                    imputation_log.append(
                        {
                            "event": "no-eligible-models",
                            "survey": spec.index,
                            "variable": variable,
                            "label": label,
                            "reason": str(exc),
                        }
                    )
                    continue
                if record is None:
                    continue
                wis_records.extend(record["wis"])
                weight_records.append(record["weights"])

    paired_tables = _paired_tables(wis_records)
    return EvaluationReport(
        schema_version=SCHEMA_VERSION,
        wis_records=wis_records,
        weight_records=weight_records,
        paired_tables=paired_tables,
        imputation_log=imputation_log,
        config_echo=_config_echo(config),
    )


def _run_cell(
    config,
    spec,
    variable,
    label,
    pool,
    survey_of,
    resolved,
    truths,
    imputation_log,
):
    """One (survey, variable, ensemble) evaluation step."""
    var_pool = [fc for fc in pool if fc.target.variable == variable]
    if not var_pool:
        return None
    matrix, _ = assemble_matrices(var_pool, truths)

    if config.strict_joint_spotty and config.inclusion_strategy == SPOTTY_MEMORY:
        # Joint rule: a model missing any current-survey target across all
        # variables is dropped from every variable's ensemble.
        joint, _ = assemble_matrices(pool, truths)
        joint_kept = apply_inclusion_strategy(
            joint, config.inclusion_strategy, spec.index, survey_of
        )
        keep = [i for i, m in enumerate(matrix.models) if m in set(joint_kept.models)]
        if not keep:
            raise NoEligibleModelsError(
                f"no eligible models under joint spotty rule at survey {spec.index}"
            )
        matrix = matrix.with_rows(keep)
    else:
        matrix = apply_inclusion_strategy(
            matrix, config.inclusion_strategy, spec.index, survey_of
        )

    local_log: list = []
    matrix = _impute_matrix(matrix, config, local_log)
    for event in local_log:
        event.update({"survey": spec.index, "variable": variable, "label": label})
    imputation_log.extend(local_log)

    if config.weighting == "performance":
        de = replace(
            config.de,
            seed=derive_seed(config.de.seed, spec.index, variable, label),
        )
        weights = fit_performance_weights(matrix, resolved, de)
    else:
        weights = WeightVector.equal(matrix.n_models)

    current_idx = [
        t
        for t in range(matrix.n_targets)
        if survey_of[matrix.targets[t]] == spec.index
    ]
    if not current_idx:
        return None
    current = matrix.with_targets(current_idx)
    forecast = quantile_average(current, weights, label=label)

    wis = []
    for target, levels, values in zip(
        forecast.targets, forecast.level_sets, forecast.quantiles
    ):
        truth = truths.get(target)
        if truth is None:
            continue
        wis.append(
            {
                "survey": spec.index,
                "variable": variable,
                "label": label,
                "target": target.label(),
                "wis": wis_from_values(levels, values, truth),
            }
        )
    return {
        "wis": wis,
        "weights": {
            "survey": spec.index,
            "variable": variable,
            "label": label,
            "models": list(matrix.models),
            "weights": [float(w) for w in weights.weights],
        },
    }


def _paired_tables(wis_records) -> list:
    """Survey-paired WIS differences and t tests per variable and pair."""
    by_key: dict = {}
    for rec in wis_records:
        by_key.setdefault((rec["variable"], rec["label"], rec["survey"]), []).append(rec["wis"])
    mean_wis = {k: float(np.mean(v)) for k, v in by_key.items()}
    variables = sorted({k[0] for k in mean_wis})
    surveys = sorted({k[2] for k in mean_wis})
    tables = []
    for variable in variables:
        for first, second in _COMPARISONS:
            rows = []
            for s in surveys:
                a = mean_wis.get((variable, first, s))
                b = mean_wis.get((variable, second, s))
                if a is None or b is None:
                    continue
                rows.append(
                    {"survey": s, "wis_first": a, "wis_second": b, "difference": a - b}
                )
            if not rows:
                continue
            table = {
                "variable": variable,
                "comparison": f"{first}-minus-{second}",
                "rows": rows,
                "n": len(rows),
                "mean_difference": float(np.mean([r["difference"] for r in rows])),
            }
            diffs = [r["difference"] for r in rows]
            if len(diffs) >= 2 and float(np.std(diffs, ddof=1)) > 0.0:
                test = paired_t_test_one_sided(
                    [r["wis_first"] for r in rows], [r["wis_second"] for r in rows]
                )
                table["t_statistic"] = test.t_statistic
                table["p_value_one_sided"] = test.p_value_one_sided
            else:
                table["t_statistic"] = None
                table["p_value_one_sided"] = None
            tables.append(table)
    return tables


def _config_echo(config: RunConfig) -> dict:
    return {
        "inclusion_strategy": config.inclusion_strategy,
        "strict_joint_spotty": config.strict_joint_spotty,
        "technique": config.imputer.technique,
        "weighting": config.weighting,
        "ensemble_set": list(config.ensemble_set),
        "imputer_seed": config.imputer.seed,
        "de_seed": config.de.seed,
        "threads": config.threads,
        "surveys": [s.index for s in config.surveys],
    }


def _canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def emit_report(report: EvaluationReport, format: str, output_dir) -> list:
    """Write the report deterministically; returns the created paths.

    ``json`` is the canonical schema; ``csv-tables`` mirrors the paired
    difference tables; ``markdown`` is the human-readable summary. The same
    report always produces byte-identical files.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"cannot create output dir {out}: {exc}") from exc
    paths = []
    try:
        if format == "json":
            path = out / "report.json"
            path.write_text(_canonical_json(report.to_dict()), encoding="utf-8")
            paths.append(path)
        elif format == "csv-tables":
            paths.append(_write_paired_csv(report, out / "paired_differences.csv"))
            paths.append(_write_tests_csv(report, out / "paired_tests.csv"))
            paths.append(_write_wis_csv(report, out / "wis_scores.csv"))
        elif format == "markdown":
            path = out / "report.md"
            path.write_text(_render_markdown(report), encoding="utf-8")
            paths.append(path)
        else:
            raise ValueError(f"unknown report format {format!r}")
    except OSError as exc:
        raise ReportWriteError(f"cannot write report under {out}: {exc}") from exc
    return paths


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _write_paired_csv(report, path: Path) -> Path:
    lines = ["variable,comparison,survey,wis_first,wis_second,difference"]
    for table in report.paired_tables:
        for row in table["rows"]:
            lines.append(
                ",".join(
                    [
                        table["variable"],
                        table["comparison"],
                        str(row["survey"]),
                        _fmt(row["wis_first"]),
                        _fmt(row["wis_second"]),
                        _fmt(row["difference"]),
                    ]
                )
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _write_tests_csv(report, path: Path) -> Path:
    lines = ["variable,comparison,n,mean_difference,t_statistic,p_value_one_sided"]
    for table in report.paired_tables:
        lines.append(
            ",".join(
                [
                    table["variable"],
                    table["comparison"],
                    str(table["n"]),
                    _fmt(table["mean_difference"]),
                    _fmt(table["t_statistic"]),
                    _fmt(table["p_value_one_sided"]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _write_wis_csv(report, path: Path) -> Path:
    lines = ["survey,variable,label,target,wis"]
    for rec in sorted(
        report.wis_records,
        key=lambda r: (r["survey"], r["variable"], r["label"], r["target"]),
    ):
        lines.append(
            ",".join(
                [
                    str(rec["survey"]),
                    rec["variable"],
                    rec["label"],
                    rec["target"],
                    _fmt(rec["wis"]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _render_markdown(report) -> str:
    lines = ["# Ensemble evaluation report", ""]
    echo = report.config_echo
    lines.append(
        f"Strategy `{echo.get('inclusion_strategy')}`, technique "
        f"`{echo.get('technique')}`, weighting `{echo.get('weighting')}`."
    )
    lines.append("")
    if not report.paired_tables:
        lines.append("No paired comparisons were possible.")
    for table in report.paired_tables:
        lines.append(f"## {table['variable']}: {table['comparison']}")
        lines.append("")
        lines.append(
            f"Mean paired WIS difference over {table['n']} surveys: "
            f"{table['mean_difference']:.6g}"
        )
        if table["t_statistic"] is not None:
            lines.append(
                f"One-sided paired t test: t = {table['t_statistic']:.4g}, "
                f"p = {table['p_value_one_sided']:.4g}"
            )
        lines.append("")
        lines.append("| survey | first | second | difference |")
        lines.append("| --- | --- | --- | --- |")
        for row in table["rows"]:
            lines.append(
                f"| {row['survey']} | {row['wis_first']:.6g} | "
                f"{row['wis_second']:.6g} | {row['difference']:.6g} |"
            )
        lines.append("")
    return "\n".join(lines) + "\n"

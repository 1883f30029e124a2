"""Command-line interface.

Subcommands: ingest, validate, impute, ensemble, evaluate, report. Global
flags: --config <path> (JSON run configuration), --seed <u64> (overrides
the configured imputer and optimizer seeds), --threads <n>.

Exit codes: 0 on success, 1 when validation produced findings or ingestion
produced diagnostics, 2 on hard failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .core import (
    ForecastMatrix,
    apply_inclusion_strategy,
    assemble_matrices,
    required_levels_for,
    validate_quantile_forecast,
)
from .ensemble import WeightVector, fit_performance_weights, quantile_average
from .errors import ChimericError
from .pipeline import (
    EvaluationReport,
    RunConfig,
    _convert_submissions,
    _impute_matrix,
    _ingest,
    _select_computational,
    derive_seed,
    emit_report,
    load_run_config,
    run_evaluation,
)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_FAILURE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chimeric",
        description="Quantile-forecast ensembles from computational models and human judgment.",
    )
    parser.add_argument("--config", required=True, help="path to the run configuration JSON")
    parser.add_argument("--seed", type=int, default=None, help="override configured seeds")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for imputation")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="parse all inputs and write the normalized bundle")
    sub.add_parser("validate", help="check forecasts against their required level sets")

    p_impute = sub.add_parser("impute", help="assemble, filter and impute one survey's matrix")
    p_impute.add_argument("--survey", type=int, default=None, help="survey index (default: last)")

    p_ens = sub.add_parser("ensemble", help="emit combined quantiles for one survey")
    p_ens.add_argument("--survey", type=int, default=None, help="survey index (default: last)")

    sub.add_parser("evaluate", help="run the full survey-ordered evaluation")

    p_rep = sub.add_parser("report", help="re-render an evaluation report")
    p_rep.add_argument("--input", required=True, help="path to report.json")
    p_rep.add_argument(
        "--format", default="markdown", choices=("json", "csv-tables", "markdown")
    )
    return parser


def _load(args) -> RunConfig:
    config = load_run_config(args.config)
    if args.seed is not None:
        config = replace(
            config,
            imputer=replace(config.imputer, seed=args.seed),
            de=replace(config.de, seed=args.seed),
        )
    if args.threads is not None:
        config = replace(config, threads=args.threads)
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(config: RunConfig) -> int:
    computational, submissions, provenance_of, truths, diagnostics = _ingest(config)
    out = _out_dir(config)
    bundle = {
        "n_computational_forecasts": len(computational),
        "n_submissions": len(submissions),
        "n_forecasters": len(provenance_of),
        "n_truths": len(truths),
        "diagnostics": diagnostics,
    }
    (out / "ingest.json").write_text(
        json.dumps(bundle, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )
    print(
        f"ingested {len(computational)} computational forecasts, "
        f"{len(submissions)} human submissions, {len(truths)} truths "
        f"({len(diagnostics)} diagnostics) -> {out / 'ingest.json'}"
    )
    return EXIT_FINDINGS if diagnostics else EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    computational, *_ = _ingest(config)
    findings = 0
    for fc in computational:
        required = required_levels_for(fc.target.variable)
        if required is None:
            continue
        report = validate_quantile_forecast(fc, required)
        for finding in report.findings:
            findings += 1
            print(f"{fc.model_id} {fc.target.label()}: [{finding.code}] {finding.message}")
    print(f"validated {len(computational)} forecasts, {findings} findings")
    return EXIT_FINDINGS if findings else EXIT_OK


def _survey_matrix(config: RunConfig, survey_index: "int | None", label: str = "chimeric"):
    computational, submissions, provenance_of, truths, _ = _ingest(config)
    survey_of = config.survey_of()
    specs = {s.index: s for s in config.surveys}
    index = survey_index if survey_index is not None else config.surveys[-1].index
    if index not in specs:
        raise ChimericError(f"survey {index} is not configured")
    spec = specs[index]
    comp_now = [
        fc
        for fc in _select_computational(computational, spec.cutoff.date())
        if fc.target in survey_of and survey_of[fc.target] <= index
    ]
    human_now = [
        fc
        for fc in _convert_submissions(submissions, spec.cutoff, provenance_of)
        if survey_of[fc.target] <= index
    ]
    matrix, _ = assemble_matrices(comp_now + human_now, truths)
    matrix = apply_inclusion_strategy(matrix, config.inclusion_strategy, index, survey_of)
    log: list = []
    matrix = _impute_matrix(matrix, config, log)
    return spec, matrix, truths, log


def _matrix_payload(matrix: ForecastMatrix) -> dict:
    return {
        "models": list(matrix.models),
        "targets": [t.label() for t in matrix.targets],
        "levels": [list(ls) for ls in matrix.level_sets],
        "cells": [[float(v) for v in row] for row in matrix.cells],
    }


def cmd_impute(config: RunConfig, survey: "int | None") -> int:
    spec, matrix, _, log = _survey_matrix(config, survey)
    out = _out_dir(config)
    payload = _matrix_payload(matrix)
    payload["imputation_log"] = log
    path = out / f"imputed_survey{spec.index}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(
        f"survey {spec.index}: {matrix.n_models} models x {matrix.n_targets} targets "
        f"fully present -> {path}"
    )
    return EXIT_OK


def cmd_ensemble(config: RunConfig, survey: "int | None") -> int:
    spec, matrix, truths, _ = _survey_matrix(config, survey)
    survey_of = config.survey_of()
    if config.weighting == "performance":
        resolved_keys = [
            t
            for t in matrix.targets
            if t in truths and t.target_end_date < spec.cutoff.date()
        ]
        resolved = type(truths)({t: truths.get(t) for t in resolved_keys})
        de = replace(config.de, seed=derive_seed(config.de.seed, spec.index, "cli", "chimeric"))
        weights = fit_performance_weights(matrix, resolved, de)
    else:
        weights = WeightVector.equal(matrix.n_models)
    current = matrix.with_targets(
        [t for t in range(matrix.n_targets) if survey_of[matrix.targets[t]] == spec.index]
    )
    forecast = quantile_average(current, weights, label="chimeric")
    out = _out_dir(config)
    lines = ["target,location,target_end_date,quantile,value"]
    for target, levels, values in zip(
        forecast.targets, forecast.level_sets, forecast.quantiles
    ):
        for p, v in zip(levels, values):
            lines.append(
                f"{target.variable},{target.location},{target.target_end_date.isoformat()},"
                f"{p},{float(v)}"
            )
    path = out / f"ensemble_survey{spec.index}.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"survey {spec.index}: wrote ensemble quantiles for {len(forecast.targets)} targets -> {path}")
    return EXIT_OK


def cmd_evaluate(config: RunConfig) -> int:
    report = run_evaluation(config)
    paths = emit_report(report, "json", config.output_dir)
    summary = ", ".join(
        f"{t['variable']} {t['comparison']}: {t['mean_difference']:.4g}"
        for t in report.paired_tables
    )
    print(f"evaluation complete ({len(report.wis_records)} scored forecasts) -> {paths[0]}")
    if summary:
        print("mean paired WIS differences: " + summary)
    return EXIT_OK


def cmd_report(config: RunConfig, input_path: str, format: str) -> int:
    raw = json.loads(Path(input_path).read_text(encoding="utf-8"))
    report = EvaluationReport.from_dict(raw)
    paths = emit_report(report, format, config.output_dir)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def main(argv: "list[str] | None" = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load(args)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "impute":
            return cmd_impute(config, args.survey)
        if args.command == "ensemble":
            return cmd_ensemble(config, args.survey)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "report":
            return cmd_report(config, args.input, args.format)
        parser.error(f"unknown command {args.command!r}")
    except ChimericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

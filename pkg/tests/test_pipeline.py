import datetime as dt
import json
from dataclasses import replace

import pytest

from chimeric.core import CASES, DEATHS, TruthSet
from chimeric.ensemble import DEConfig
from chimeric.errors import ConfigError
from chimeric.imputation import ImputerConfig
from chimeric.pipeline import (
    EvaluationReport,
    ForecastSource,
    RunConfig,
    SurveySpec,
    derive_seed,
    emit_report,
    load_run_config,
    run_evaluation,
)
from chimeric.synthetic import generate_dataset, make_run_config

from conftest import make_forecast, make_target


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    generate_dataset(root, seed=20210111)
    return root


@pytest.fixture(scope="module")
def base_config(dataset):
    return make_run_config(dataset)


class TestConfig:
    def test_load_round_trip(self, dataset):
        config = load_run_config(dataset / "config.json")
        assert len(config.surveys) == 6
        assert config.surveys[0].targets[0].variable in (CASES, DEATHS)

    def test_surveys_must_be_ordered(self, base_config):
        reversed_surveys = tuple(reversed(base_config.surveys))
        with pytest.raises(ConfigError):
            replace(base_config, surveys=reversed_surveys)

    def test_missing_sources_rejected(self, base_config):
        with pytest.raises(ConfigError):
            replace(base_config, forecast_sources=())

    def test_derive_seed_stable_and_distinct(self):
        a = derive_seed(7, "t1", "mean")
        assert a == derive_seed(7, "t1", "mean")
        assert a != derive_seed(7, "t2", "mean")
        assert a != derive_seed(8, "t1", "mean")


class TestStructure:
    def test_equal_weight_report_shape(self, base_config):
        config = replace(base_config, weighting="equal")
        report = run_evaluation(config)
        # 6 surveys x 2 variables x 2 ensembles, truth available everywhere.
        assert len(report.wis_records) == 24
        for table in report.paired_tables:
            assert table["n"] == 6
        labels = {r["label"] for r in report.wis_records}
        assert labels == {"computational", "chimeric"}

    def test_chimeric_rows_are_union_before_filtering(self, base_config):
        from chimeric.cli import _survey_matrix

        # defer-to-crowd keeps every model with any submission, so the
        # chimeric matrix row set is the union of both pools.
        config = replace(base_config, inclusion_strategy="defer-to-crowd")
        _, matrix, _, _ = _survey_matrix(config, 6)
        names = set(matrix.models)
        assert any(n.startswith("model-") for n in names)
        assert any(n.startswith("met-") for n in names)
        assert any(n.startswith("gjo-") for n in names)

    def test_defer_equals_spotty_without_humans(self, tmp_path):
        # No human sources and every computational model complete on each
        # current survey: the two lenient strategies keep identical row sets
        # (defer's extra inclusions could only have been human rows), so the
        # evaluation output coincides exactly.
        header = "model,forecast_date,target,target_end_date,location,type,quantile,value"
        lines = [header]
        surveys = []
        ends = [dt.date(2021, 1, 23) + dt.timedelta(weeks=i) for i in range(3)]
        for i, end in enumerate(ends):
            target = make_target(end=end.isoformat())
            cutoff = dt.datetime.combine(end - dt.timedelta(days=12), dt.time(12))
            surveys.append(SurveySpec(index=i + 1, cutoff=cutoff, targets=(target,)))
            for model in ("m1", "m2"):
                if model == "m2" and i == 0:
                    continue  # m2 misses only a past survey
                fdate = end - dt.timedelta(days=12)
                for j, p in enumerate((0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975)):
                    lines.append(
                        f"{model},{fdate.isoformat()},2 wk ahead inc case,"
                        f"{end.isoformat()},US,quantile,{p},{100 + 10 * j}"
                    )
        (tmp_path / "fc.csv").write_text("\n".join(lines) + "\n")
        truth_lines = ["date,location,variable,value"]
        for end in ends:
            for j in range(7):
                day = end - dt.timedelta(days=6 - j)
                truth_lines.append(f"{day.isoformat()},US,incident-cases,20")
        (tmp_path / "truth.csv").write_text("\n".join(truth_lines) + "\n")
        config = RunConfig(
            forecast_sources=(
                ForecastSource(str(tmp_path / "fc.csv"), "computational", "hub-csv"),
            ),
            truth_path=str(tmp_path / "truth.csv"),
            surveys=tuple(surveys),
            ensemble_set=("computational",),
            imputer=ImputerConfig("median", seed=1),
            output_dir=str(tmp_path),
        )
        r_defer = run_evaluation(replace(config, inclusion_strategy="defer-to-crowd"))
        r_spotty = run_evaluation(replace(config, inclusion_strategy="spotty-memory"))
        assert r_defer.wis_records == r_spotty.wis_records
        assert [r["models"] for r in r_defer.weight_records] == [
            r["models"] for r in r_spotty.weight_records
        ]

    def test_earliest_in_window_forecast_date_selected(self):
        from chimeric.core import CASE_LEVELS, QuantileForecast
        from chimeric.pipeline import _select_computational

        target = make_target(end="2021-01-23")

        def dated(model, day, fill):
            return QuantileForecast(
                model, target, CASE_LEVELS, [fill] * 7,
                forecast_date=dt.date(2021, 1, day),
            )

        early, late, future = dated("m", 10, 1.0), dated("m", 11, 2.0), dated("m2", 12, 3.0)
        chosen = _select_computational([late, early, future], dt.date(2021, 1, 11))
        assert len(chosen) == 1
        assert chosen[0].forecast_date == dt.date(2021, 1, 10)

    def test_strict_joint_spotty_drops_cross_variable(self, base_config):
        # Under the joint rule a model missing the current deaths target
        # leaves the cases ensemble too, so the per-variable row sets shrink
        # (or stay equal) relative to the per-variable rule.
        config = replace(
            base_config,
            inclusion_strategy="spotty-memory",
            imputer=ImputerConfig("mean", seed=2),
        )
        lenient = run_evaluation(config)
        strict = run_evaluation(replace(config, strict_joint_spotty=True))
        lenient_rows = {
            (r["survey"], r["variable"], r["label"]): set(r["models"])
            for r in lenient.weight_records
        }
        strict_rows = {
            (r["survey"], r["variable"], r["label"]): set(r["models"])
            for r in strict.weight_records
        }
        assert set(strict_rows) == set(lenient_rows)
        assert all(strict_rows[k] <= lenient_rows[k] for k in strict_rows)
        assert any(strict_rows[k] < lenient_rows[k] for k in strict_rows)

    def test_weights_recorded_per_cell(self, base_config):
        report = run_evaluation(base_config)
        rec = report.weight_records[0]
        assert len(rec["models"]) == len(rec["weights"])
        assert sum(rec["weights"]) == pytest.approx(1.0, abs=1e-9)


class TestNoLookAhead:
    def test_poisoned_future_truth_leaves_weights_unchanged(self, base_config):
        config = replace(
            base_config,
            weighting="performance",
            de=DEConfig(seed=3, max_generations=40),
            imputer=ImputerConfig("mean", seed=3),
        )
        baseline = run_evaluation(config)

        # Poison: multiply the final survey's truths by 1000. Weights for
        # every survey must be identical because weight fitting only sees
        # truths resolved before each cutoff.
        from chimeric.io import parse_truth_csv

        targets = [t for s in config.surveys for t in s.targets]
        truths = parse_truth_csv(config.truth_path, targets)
        poisoned = TruthSet()
        last_end = max(t.target_end_date for t in targets)
        for (variable, location, end), value in truths.items():
            poisoned.add(
                (variable, location, end),
                value * 1000.0 if end == last_end else value,
            )
        poisoned_report = run_evaluation(config, truths=poisoned)

        base_weights = {
            (r["survey"], r["variable"], r["label"]): r["weights"]
            for r in baseline.weight_records
        }
        poisoned_weights = {
            (r["survey"], r["variable"], r["label"]): r["weights"]
            for r in poisoned_report.weight_records
        }
        assert base_weights == poisoned_weights


class TestPerformanceWeighting:
    def test_oracle_model_beats_equal_weights_out_of_sample(self, tmp_path):
        # Synthetic history where model A equals truth exactly: the fitted
        # ensemble must not lose to equal weights on the held-out survey.
        surveys = []
        forecasts = []
        truths = {}
        for i in range(4):
            end = dt.date(2021, 1, 23) + dt.timedelta(weeks=i)
            target = make_target(end=end.isoformat())
            truth = 100.0 + 10.0 * i
            truths[target] = truth
            cutoff = dt.datetime.combine(end - dt.timedelta(days=12), dt.time(12))
            surveys.append(SurveySpec(index=i + 1, cutoff=cutoff, targets=(target,)))
            forecasts.append(make_forecast("exact", [truth] * 7, target=target))
            forecasts.append(make_forecast("wild", [truth * 2.0] * 7, target=target))

        # Write the tiny dataset in hub format.
        lines = ["model,forecast_date,target,target_end_date,location,type,quantile,value"]
        for fc in forecasts:
            fdate = fc.target.target_end_date - dt.timedelta(days=12)
            for p, v in zip(fc.levels, fc.values):
                lines.append(
                    f"{fc.model_id},{fdate.isoformat()},2 wk ahead inc case,"
                    f"{fc.target.target_end_date.isoformat()},US,quantile,{p},{v}"
                )
        (tmp_path / "fc.csv").write_text("\n".join(lines) + "\n")
        truth_lines = ["date,location,variable,value"]
        for target, value in truths.items():
            base, rem = divmod(int(value * 7), 7)
            for j in range(7):
                day = target.target_end_date - dt.timedelta(days=6 - j)
                truth_lines.append(f"{day.isoformat()},US,incident-cases,{value}")
        (tmp_path / "truth.csv").write_text("\n".join(truth_lines) + "\n")

        config = RunConfig(
            forecast_sources=(
                ForecastSource(str(tmp_path / "fc.csv"), "computational", "hub-csv"),
            ),
            truth_path=str(tmp_path / "truth.csv"),
            surveys=tuple(surveys),
            ensemble_set=("computational",),
            inclusion_strategy="complete-case",
            weighting="performance",
            de=DEConfig(seed=2),
            output_dir=str(tmp_path),
        )
        perf = run_evaluation(config)
        equal = run_evaluation(replace(config, weighting="equal"))
        perf_by = {(r["survey"]): r["wis"] for r in perf.wis_records}
        equal_by = {(r["survey"]): r["wis"] for r in equal.wis_records}
        # Held-out surveys are those with fitting history: 2, 3, 4.
        for s in (2, 3, 4):
            assert perf_by[s] <= equal_by[s] + 1e-9

    def test_first_survey_has_equal_weights(self, base_config):
        config = replace(base_config, weighting="performance", de=DEConfig(seed=1))
        report = run_evaluation(config)
        first = [r for r in report.weight_records if r["survey"] == 1]
        for rec in first:
            m = len(rec["weights"])
            assert rec["weights"] == pytest.approx([1.0 / m] * m)


class TestDeterminismAndEmission:
    def test_full_run_deterministic_with_threads(self, base_config):
        config = replace(
            base_config,
            imputer=ImputerConfig("extra-trees", seed=5),
            weighting="performance",
            de=DEConfig(seed=5, max_generations=30),
        )
        r1 = run_evaluation(replace(config, threads=1))
        r2 = run_evaluation(replace(config, threads=4))
        assert r1.wis_records == r2.wis_records
        assert r1.weight_records == r2.weight_records

    def test_emission_byte_identical(self, base_config, tmp_path):
        report = run_evaluation(base_config)
        for fmt in ("json", "csv-tables", "markdown"):
            d1, d2 = tmp_path / "a", tmp_path / "b"
            p1 = emit_report(report, fmt, d1)
            p2 = emit_report(report, fmt, d2)
            for a, b in zip(p1, p2):
                assert a.read_bytes() == b.read_bytes()

    def test_json_round_trip(self, base_config, tmp_path):
        report = run_evaluation(base_config)
        (path,) = emit_report(report, "json", tmp_path)
        loaded = EvaluationReport.from_dict(json.loads(path.read_text()))
        assert loaded.to_dict() == report.to_dict()

    def test_empty_comparisons_still_emit(self, tmp_path):
        report = EvaluationReport(
            schema_version=1,
            wis_records=[],
            weight_records=[],
            paired_tables=[],
            imputation_log=[],
            config_echo={},
        )
        paths = emit_report(report, "csv-tables", tmp_path)
        for p in paths:
            assert p.exists()
            assert len(p.read_text().splitlines()) == 1  # header only

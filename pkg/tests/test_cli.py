import json

import pytest

from chimeric.cli import EXIT_FAILURE, EXIT_FINDINGS, EXIT_OK, main
from chimeric.synthetic import generate_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    generate_dataset(root, seed=20210111)
    # Rewrite the config with absolute paths so the CLI can run from anywhere.
    config = json.loads((root / "config.json").read_text())
    for source in config["forecast_sources"]:
        source["path"] = str(root / source["path"])
    config["truth_path"] = str(root / config["truth_path"])
    config["output_dir"] = str(root / "reports")
    (root / "config.json").write_text(json.dumps(config, indent=2))
    return root


def run_cli(data_dir, *args):
    return main(["--config", str(data_dir / "config.json"), *args])


class TestCli:
    def test_ingest_clean_dataset(self, data_dir, capsys):
        assert run_cli(data_dir, "ingest") == EXIT_OK
        out = capsys.readouterr().out
        assert "ingested" in out
        assert (data_dir / "reports" / "ingest.json").exists()

    def test_validate_ok(self, data_dir, capsys):
        assert run_cli(data_dir, "validate") == EXIT_OK
        assert "0 findings" in capsys.readouterr().out

    def test_validate_findings_exit_code(self, data_dir, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        header = "forecast_date,target,target_end_date,location,type,quantile,value"
        rows = [
            f"2021-01-11,2 wk ahead inc case,2021-01-23,US,quantile,{p},{v}"
            for p, v in zip((0.25, 0.5, 0.75), (5, 3, 9))  # non-monotone
        ]
        bad.write_text("\n".join([header] + rows) + "\n")
        config = json.loads((data_dir / "config.json").read_text())
        config["forecast_sources"] = [
            {"path": str(bad), "provenance": "computational", "kind": "hub-csv"}
        ]
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert main(["--config", str(path), "validate"]) == EXIT_FINDINGS
        out = capsys.readouterr().out
        assert "non-monotone" in out or "level-set-mismatch" in out

    def test_impute_and_ensemble(self, data_dir, capsys):
        assert run_cli(data_dir, "impute", "--survey", "2") == EXIT_OK
        assert run_cli(data_dir, "ensemble") == EXIT_OK
        out = capsys.readouterr().out
        assert (data_dir / "reports" / "imputed_survey2.json").exists()
        csv_path = data_dir / "reports" / "ensemble_survey6.csv"
        assert csv_path.exists()
        assert csv_path.read_text().startswith("target,location,target_end_date")

    def test_evaluate_and_report(self, data_dir, capsys):
        assert run_cli(data_dir, "evaluate") == EXIT_OK
        report_path = data_dir / "reports" / "report.json"
        assert report_path.exists()
        assert (
            run_cli(data_dir, "report", "--input", str(report_path), "--format", "markdown")
            == EXIT_OK
        )
        assert (data_dir / "reports" / "report.md").exists()

    def test_hard_failure_exit_code(self, data_dir, tmp_path, capsys):
        config = json.loads((data_dir / "config.json").read_text())
        config["truth_path"] = str(tmp_path / "missing.csv")
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert main(["--config", str(path), "evaluate"]) == EXIT_FAILURE
        assert "error:" in capsys.readouterr().err

    def test_seed_override_changes_performance_weights(self, data_dir, tmp_path):
        config = json.loads((data_dir / "config.json").read_text())
        config["weighting"] = "performance"
        config["output_dir"] = str(tmp_path / "a")
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert main(["--config", str(path), "--seed", "1", "evaluate"]) == EXIT_OK
        report_a = json.loads((tmp_path / "a" / "report.json").read_text())
        config["output_dir"] = str(tmp_path / "b")
        path.write_text(json.dumps(config))
        assert main(["--config", str(path), "--seed", "2", "evaluate"]) == EXIT_OK
        report_b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert report_a["weight_records"] != report_b["weight_records"]
        assert report_a["config_echo"]["de_seed"] == 1

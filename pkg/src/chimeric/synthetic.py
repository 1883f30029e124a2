"""Deterministic synthetic dataset mirroring the production data layout.

Generates six monthly surveys over two count variables with 20
computational models (around one third of forecasts missing) and 40 human
forecasters split across the two elicitation platforms (around 70 percent
missing by the cutoff), matching the observed missingness pattern this
pipeline is designed around. A few anchor models submit everything so the
complete-case strategy stays feasible. Output is the exact on-disk layout
the CLI ingests: hub-format forecast CSV, daily truth CSV, elicitation
JSONL, plus a ready-to-run config JSON.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from pathlib import Path

import numpy as np

from .core import CASES, DEATHS, CASE_LEVELS, DEATH_LEVELS, GJO, METACULUS, Target
from .pipeline import ForecastSource, RunConfig

__all__ = ["generate_dataset", "make_run_config"]

# Hub due-date Mondays for the six surveys, January through June 2021.
_CUTOFF_MONDAYS = (
    dt.date(2021, 1, 11),
    dt.date(2021, 2, 8),
    dt.date(2021, 3, 8),
    dt.date(2021, 4, 12),
    dt.date(2021, 5, 10),
    dt.date(2021, 6, 14),
)
# Two-week-ahead targets early on, three-week-ahead for the last two surveys.
_HORIZONS = (2, 2, 2, 2, 3, 3)

_N_COMPUTATIONAL = 20
_N_COMP_ANCHORS = 4
_COMP_MISS = 0.425  # 16 of 20 at this rate gives ~34% missing overall

_N_PER_PLATFORM = 20
_N_HUMAN_ANCHORS_PER_PLATFORM = 2
_HUMAN_MISS = 0.778  # 36 of 40 at this rate gives ~70% missing overall

_Z_CACHE: dict = {}


def _normal_quantiles(levels) -> np.ndarray:
    """Standard normal quantiles via bisection on erf (cached per level tuple)."""
    key = tuple(levels)
    if key not in _Z_CACHE:
        zs = []
        for p in key:
            lo, hi = -10.0, 10.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < p:
                    lo = mid
                else:
                    hi = mid
            zs.append(0.5 * (lo + hi))
        _Z_CACHE[key] = np.array(zs)
    return _Z_CACHE[key]


def _weekly_truth(variable: str, i: int) -> float:
    """Smooth declining epidemic curve with a mid-year bump."""
    if variable == CASES:
        base = 1_500_000.0 * math.exp(-0.35 * i) + 180_000.0 + 60_000.0 * math.sin(0.9 * i)
    else:
        base = 21_000.0 * math.exp(-0.28 * i) + 2_600.0 + 700.0 * math.sin(0.8 * i + 1.0)
    return float(round(base))


def _survey_targets():
    surveys = []
    for idx, (monday, horizon) in enumerate(zip(_CUTOFF_MONDAYS, _HORIZONS), start=1):
        end = monday + dt.timedelta(days=7 * horizon - 2)  # Saturday weeks later
        targets = (
            Target(CASES, "US", end, horizon),
            Target(DEATHS, "US", end, horizon),
        )
        surveys.append((idx, monday, targets))
    return surveys


def _quantiles_about(rng, truth, levels, bias_sd, spread_lo, spread_hi):
    mu = truth * (1.0 + rng.normal(0.0, bias_sd))
    sigma = truth * rng.uniform(spread_lo, spread_hi)
    z = _normal_quantiles(levels)
    return np.maximum.accumulate(np.clip(mu + sigma * z, 0.0, None))


def generate_dataset(out_dir, seed: int = 20210111) -> dict:
    """Write forecasts.csv, truth.csv, submissions.jsonl and config.json.

    Returns a dict of the four paths plus realized missingness fractions.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    surveys = _survey_targets()

    truth_by_target = {}
    for idx, _, targets in surveys:
        for target in targets:
            truth_by_target[target] = _weekly_truth(target.variable, idx - 1)

    # Daily truth rows: each target week's total split across its 7 days.
    truth_lines = ["date,location,variable,value"]
    for target, weekly in sorted(truth_by_target.items(), key=lambda kv: kv[0]):
        days = [target.target_end_date - dt.timedelta(days=i) for i in range(6, -1, -1)]
        base, rem = divmod(int(weekly), 7)
        for j, day in enumerate(days):
            truth_lines.append(
                f"{day.isoformat()},{target.location},{target.variable},{base + (1 if j < rem else 0)}"
            )

    comp_models = [f"model-{i:02d}" for i in range(_N_COMPUTATIONAL)]
    comp_present = 0
    comp_cells = 0
    forecast_lines = ["model,forecast_date,target,target_end_date,location,type,quantile,value"]
    target_text = {2: "2 wk ahead", 3: "3 wk ahead"}
    for idx, monday, targets in surveys:
        for target in targets:
            levels = CASE_LEVELS if target.variable == CASES else DEATH_LEVELS
            name = f"{target_text[target.horizon_weeks]} {'inc case' if target.variable == CASES else 'inc death'}"
            truth = truth_by_target[target]
            for m, model in enumerate(comp_models):
                comp_cells += 1
                is_anchor = m < _N_COMP_ANCHORS
                if not is_anchor and rng.random() < _COMP_MISS:
                    continue
                comp_present += 1
                values = _quantiles_about(rng, truth, levels, 0.06, 0.04, 0.16)
                # A couple of models also file the day before the due date;
                # the pipeline must keep the earliest in-window submission.
                dates = [monday]
                if m % 7 == 1:
                    dates = [monday - dt.timedelta(days=1), monday]
                for forecast_date in dates:
                    for p, v in zip(levels, values):
                        forecast_lines.append(
                            f"{model},{forecast_date.isoformat()},{name},"
                            f"{target.target_end_date.isoformat()},{target.location},"
                            f"quantile,{p},{float(v)}"
                        )

    human_ids = [f"met-{i:02d}" for i in range(_N_PER_PLATFORM)] + [
        f"gjo-{i:02d}" for i in range(_N_PER_PLATFORM)
    ]
    submissions = []
    human_present = 0
    human_cells = 0
    for idx, monday, targets in surveys:
        cutoff = dt.datetime.combine(monday, dt.time(23, 59))
        for target in targets:
            truth = truth_by_target[target]
            for h, human in enumerate(human_ids):
                platform = METACULUS if human.startswith("met-") else GJO
                within_platform = h % _N_PER_PLATFORM
                is_anchor = within_platform < _N_HUMAN_ANCHORS_PER_PLATFORM
                human_cells += 1
                present = is_anchor or rng.random() >= _HUMAN_MISS
                if not present:
                    # Half the absentees file only after the cutoff.
                    if rng.random() < 0.5:
                        submissions.append(
                            _submission_record(
                                rng, human, platform, target, truth,
                                cutoff + dt.timedelta(days=2, hours=float(rng.uniform(0, 24))),
                            )
                        )
                    continue
                human_present += 1
                n_rev = int(rng.integers(1, 3))
                times = sorted(
                    cutoff - dt.timedelta(hours=float(u))
                    for u in rng.uniform(1.0, 96.0, size=n_rev)
                )
                for when in times:
                    submissions.append(
                        _submission_record(rng, human, platform, target, truth, when)
                    )

    config = {
        "forecast_sources": [
            {"path": "forecasts.csv", "provenance": "computational", "kind": "hub-csv"},
            {"path": "metaculus.jsonl", "provenance": "metaculus", "kind": "elicitation-jsonl"},
            {"path": "gjo.jsonl", "provenance": "gjo", "kind": "elicitation-jsonl"},
        ],
        "truth_path": "truth.csv",
        "surveys": [
            {
                "index": idx,
                "cutoff": dt.datetime.combine(monday, dt.time(23, 59)).isoformat(),
                "targets": [
                    {
                        "variable": t.variable,
                        "location": t.location,
                        "target_end_date": t.target_end_date.isoformat(),
                        "horizon_weeks": t.horizon_weeks,
                    }
                    for t in targets
                ],
            }
            for idx, monday, targets in surveys
        ],
        "ensemble_set": ["computational", "chimeric"],
        "inclusion_strategy": "defer-to-crowd",
        "imputer": {"technique": "mean", "seed": 7},
        "weighting": "equal",
        "de": {"seed": 7},
        "output_dir": "reports",
    }

    paths = {
        "forecasts": out / "forecasts.csv",
        "truth": out / "truth.csv",
        "metaculus": out / "metaculus.jsonl",
        "gjo": out / "gjo.jsonl",
        "config": out / "config.json",
    }
    paths["forecasts"].write_text("\n".join(forecast_lines) + "\n", encoding="utf-8")
    paths["truth"].write_text("\n".join(truth_lines) + "\n", encoding="utf-8")
    for key in ("metaculus", "gjo"):
        lines = [
            json.dumps(s, sort_keys=True)
            for s in submissions
            if s["forecaster_id"].startswith("met-" if key == "metaculus" else "gjo-")
        ]
        paths[key].write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return {
        **{k: str(v) for k, v in paths.items()},
        "computational_missing": 1.0 - comp_present / comp_cells,
        "human_missing": 1.0 - human_present / human_cells,
    }


def _submission_record(rng, human, platform, target, truth, when) -> dict:
    record = {
        "forecaster_id": human,
        "target": {
            "variable": target.variable,
            "location": target.location,
            "target_end_date": target.target_end_date.isoformat(),
        },
        "submitted_at": when.isoformat(),
    }
    if platform == METACULUS:
        n_comp = int(rng.integers(1, 4))
        weights = rng.uniform(0.2, 1.0, size=n_comp)
        weights = weights / weights.sum()
        components = []
        for w in weights:
            loc = truth * (1.0 + rng.normal(0.0, 0.10))
            scale = truth * rng.uniform(0.04, 0.20)
            components.append({"location": float(loc), "scale": float(scale), "weight": float(w)})
        record["kind"] = "logistic_mixture"
        record["payload"] = {"components": components, "bounds": [0.0, float(truth * 8.0 + 10.0)]}
    else:
        n_bins = int(rng.integers(8, 13))
        edges = np.linspace(0.0, truth * 3.0 + 10.0, n_bins + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        mu = truth * (1.0 + rng.normal(0.0, 0.10))
        sigma = truth * rng.uniform(0.08, 0.25)
        masses = np.exp(-0.5 * ((centers - mu) / sigma) ** 2) + 1e-9
        masses = masses / masses.sum()
        record["kind"] = "interval_histogram"
        record["payload"] = {
            "breakpoints": [float(e) for e in edges],
            "probabilities": [float(p) for p in masses],
        }
    return record


def make_run_config(data_dir, **overrides) -> RunConfig:
    """RunConfig pointing at a generated dataset directory."""
    from .pipeline import load_run_config

    data_dir = Path(data_dir)
    config = load_run_config(data_dir / "config.json")
    sources = tuple(
        ForecastSource(
            path=str(data_dir / s.path),
            provenance=s.provenance,
            kind=s.kind,
        )
        for s in config.forecast_sources
    )
    from dataclasses import replace

    config = replace(
        config,
        forecast_sources=sources,
        truth_path=str(data_dir / config.truth_path),
        output_dir=str(data_dir / config.output_dir),
    )
    if overrides:
        config = replace(config, **overrides)
    return config

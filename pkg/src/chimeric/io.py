"""File ingestion: hub-style forecast CSV, truth CSV, elicitation JSONL.

Formats:

- Forecast CSV columns: forecast_date, target (e.g. "2 wk ahead inc case"),
  target_end_date, location, type, quantile, value. An optional ``model``
  column names the submitting model; otherwise the file stem (minus a
  leading date) is used. Only type == "quantile" rows are read; point rows
  are ignored. Malformed rows land in a diagnostics list, never dropped
  silently.
- Truth CSV columns: date, location, variable, value, holding daily counts
  that are summed over the seven days ending at each target's end date.
- Elicitation JSONL: one JSON object per line,
  {forecaster_id, target: {variable, location, target_end_date},
   submitted_at, kind: "logistic_mixture" | "interval_histogram",
   payload: {...}}.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import (
    CASES,
    DEATHS,
    QuantileForecast,
    QuantileLevelSet,
    Target,
    TruthSet,
    COMPUTATIONAL,
)
from .elicitation import IntervalHistogram, LogisticMixture, Submission
from .errors import DataFormatError, PartialWeekError

__all__ = [
    "HubParseResult",
    "ElicitationParseResult",
    "parse_hub_quantile_csv",
    "parse_truth_csv",
    "parse_elicitation_jsonl",
]

FORECAST_COLUMNS = (
    "forecast_date",
    "target",
    "target_end_date",
    "location",
    "type",
    "quantile",
    "value",
)
TRUTH_COLUMNS = ("date", "location", "variable", "value")

_TARGET_RE = re.compile(r"^(\d+)\s+wk\s+ahead\s+(.+)$")
_VARIABLE_MAP = {
    "inc case": CASES,
    "inc death": DEATHS,
    "incident-cases": CASES,
    "incident-deaths": DEATHS,
}
_DATE_STEM_RE = re.compile(r"^\d{4}-\d{2}-\d{2}[-_]?")


@dataclass(frozen=True)
class HubParseResult:
    forecasts: tuple
    diagnostics: tuple


@dataclass(frozen=True)
class ElicitationParseResult:
    submissions: tuple
    diagnostics: tuple


def _parse_date(text: str, what: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValueError(f"bad {what} {text!r}") from exc


def _variable_from_target_text(text: str) -> tuple:
    m = _TARGET_RE.match(text.strip())
    if not m:
        raise ValueError(f"unrecognized target text {text!r}")
    horizon = int(m.group(1))
    raw = m.group(2).strip()
    return _VARIABLE_MAP.get(raw, raw), horizon


def _model_id_from_path(path: Path) -> str:
    return _DATE_STEM_RE.sub("", path.stem)


def parse_hub_quantile_csv(
    path,
    provenance: str = COMPUTATIONAL,
    model_id: "str | None" = None,
) -> HubParseResult:
    """Read hub-format quantile rows into per-(model, target) forecasts.

    Rows sharing (model, forecast_date, target) are grouped into one
    QuantileForecast; a duplicated level within a group rejects the
    offending row with a diagnostic. Missing required columns fail hard,
    naming the column.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read forecast CSV {path}: {exc}") from exc
    diagnostics = []
    grouped: dict = {}
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for col in FORECAST_COLUMNS:
            if col not in header:
                raise DataFormatError(f"forecast CSV {path} missing required column {col!r}")
        has_model_col = "model" in header
        default_model = model_id if model_id is not None else _model_id_from_path(path)
        for line_no, row in enumerate(reader, start=2):
            if (row.get("type") or "").strip() != "quantile":
                continue
            try:
                model = (row["model"].strip() if has_model_col and row.get("model") else default_model)
                forecast_date = _parse_date(row["forecast_date"], "forecast_date")
                end_date = _parse_date(row["target_end_date"], "target_end_date")
                variable, horizon = _variable_from_target_text(row["target"])
                level = float(row["quantile"])
                value = float(row["value"])
                if not 0.0 < level < 1.0:
                    raise ValueError(f"quantile level {level} outside (0, 1)")
                lag_days = (end_date - forecast_date).days
                if not 7 * (horizon - 1) < lag_days <= 7 * horizon:
                    raise ValueError(
                        f"target_end_date {end_date} is {lag_days} days after "
                        f"forecast_date for a {horizon} wk ahead target"
                    )
            except (KeyError, ValueError) as exc:
                diagnostics.append({"line": line_no, "error": str(exc)})
                continue
            target = Target(variable, row["location"].strip(), end_date, horizon)
            key = (model, forecast_date, target)
            levels_values = grouped.setdefault(key, {})
            if level in levels_values:
                diagnostics.append(
                    {"line": line_no, "error": f"duplicate level {level} for {model}/{target.label()}"}
                )
                continue
            levels_values[level] = value

    forecasts = []
    for (model, forecast_date, target), pairs in grouped.items():
        levels = sorted(pairs)
        try:
            level_set = QuantileLevelSet(levels)
        except ValueError as exc:
            diagnostics.append(
                {
                    "line": None,
                    "error": f"{model}/{target.label()}: level set rejected ({exc})",
                }
            )
            continue
        forecasts.append(
            QuantileForecast(
                model_id=model,
                target=target,
                levels=level_set,
                values=[pairs[p] for p in levels],
                provenance=provenance,
                forecast_date=forecast_date,
            )
        )
    return HubParseResult(tuple(forecasts), tuple(diagnostics))


def parse_truth_csv(path, targets: "Iterable[Target] | None" = None) -> TruthSet:
    """Aggregate daily truth rows into weekly values per target.

    With ``targets`` given, each target's truth is the sum of the seven
    daily values ending at its target_end_date; a gap inside that window is
    a PartialWeekError. Without targets, every complete Saturday-ending
    week found per (variable, location) is recorded.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read truth CSV {path}: {exc}") from exc
    daily: dict = {}
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for col in TRUTH_COLUMNS:
            if col not in header:
                raise DataFormatError(f"truth CSV {path} missing required column {col!r}")
        for line_no, row in enumerate(reader, start=2):
            try:
                day = _parse_date(row["date"], "date")
                variable = _VARIABLE_MAP.get(row["variable"].strip(), row["variable"].strip())
                location = row["location"].strip()
                value = float(row["value"])
            except (KeyError, ValueError) as exc:
                raise DataFormatError(f"truth CSV {path} line {line_no}: {exc}") from exc
            key = (variable, location)
            series = daily.setdefault(key, {})
            if day in series:
                raise DataFormatError(f"truth CSV {path} line {line_no}: duplicate date {day}")
            series[day] = value

    truths = TruthSet()
    if targets is not None:
        for target in targets:
            series = daily.get((target.variable, target.location), {})
            week = [target.target_end_date - dt.timedelta(days=i) for i in range(6, -1, -1)]
            missing = [d for d in week if d not in series]
            if len(missing) == 7:
                continue  # week entirely absent: target simply unresolved
            if missing:
                raise PartialWeekError(
                    f"truth for {target.label()} missing days: "
                    + ", ".join(d.isoformat() for d in missing)
                )
            truths.add(target, sum(series[d] for d in week))
        return truths

    for (variable, location), series in daily.items():
        saturdays = sorted(d for d in series if d.weekday() == 5)
        for end in saturdays:
            week = [end - dt.timedelta(days=i) for i in range(6, -1, -1)]
            if all(d in series for d in week):
                truths.add((variable, location, end), sum(series[d] for d in week))
    return truths


def _submission_from_record(record: dict, target_lookup: dict) -> Submission:
    forecaster = str(record["forecaster_id"])
    t = record["target"]
    key = (
        _VARIABLE_MAP.get(str(t["variable"]), str(t["variable"])),
        str(t["location"]),
        dt.date.fromisoformat(str(t["target_end_date"])),
    )
    if key not in target_lookup:
        raise ValueError(f"no configured target matches {key}")
    submitted_at = dt.datetime.fromisoformat(str(record["submitted_at"]))
    kind = record["kind"]
    payload = record["payload"]
    if kind == "logistic_mixture":
        dist = LogisticMixture(
            components=[
                (c["location"], c["scale"], c["weight"]) for c in payload["components"]
            ],
            bounds=tuple(payload["bounds"]),
        )
    elif kind == "interval_histogram":
        dist = IntervalHistogram(
            breakpoints=payload["breakpoints"],
            probabilities=payload["probabilities"],
        )
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return Submission(
        forecaster_id=forecaster,
        target=target_lookup[key],
        distribution=dist,
        submitted_at=submitted_at,
    )


def parse_elicitation_jsonl(path, targets: Iterable[Target]) -> ElicitationParseResult:
    """Read submission records, matching each to a configured target.

    Records that fail to parse or name an unknown target become
    diagnostics. Within each (forecaster, target) stream, submissions are
    sorted by time; a duplicated timestamp keeps the first record and
    diagnoses the rest.
    """
    path = Path(path)
    target_lookup = {t.truth_key(): t for t in targets}
    try:
        handle = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read elicitation JSONL {path}: {exc}") from exc
    diagnostics = []
    submissions = []
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                submissions.append(_submission_from_record(record, target_lookup))
            except (KeyError, TypeError, ValueError) as exc:
                diagnostics.append({"line": line_no, "error": str(exc)})

    submissions.sort(key=lambda s: (s.forecaster_id, s.target.truth_key(), s.submitted_at))
    deduped = []
    for sub in submissions:
        if deduped:
            prev = deduped[-1]
            if (
                prev.forecaster_id == sub.forecaster_id
                and prev.target == sub.target
                and prev.submitted_at == sub.submitted_at
            ):
                diagnostics.append(
                    {
                        "line": None,
                        "error": f"duplicate timestamp {sub.submitted_at.isoformat()} "
                        f"for {sub.forecaster_id}/{sub.target.label()}",
                    }
                )
                continue
        deduped.append(sub)
    return ElicitationParseResult(tuple(deduped), tuple(diagnostics))

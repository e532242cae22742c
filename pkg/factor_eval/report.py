"""Rendering of test batteries as text, CSV or JSON."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Literal

import pandas as pd
from prettytable import PrettyTable  # type: ignore

from factor_eval.stats import TestResult

OutputFormat = Literal["text", "csv", "json"]


def _tuning_text(result: TestResult) -> str:
    cfg = result.tunings
    match str(result.test_id):
        case "g1":
            return f"mu0={cfg.mu0:g}"
        case "g2":
            return f"lambda1={cfg.lambda1:g}, lambda2={cfg.lambda2:g}"
        case "g3":
            return f"tau0={cfg.tau0:g}, lambda2={cfg.lambda2:g}"
        case _:
            return f"tau0={cfg.tau0:g}, lambda1={cfg.lambda1:g}"


def _reported(result: TestResult) -> tuple[float, float]:
    if result.adjusted_statistic is not None:
        return result.adjusted_statistic, result.p_value_adjusted  # type: ignore[return-value]
    return result.statistic, result.p_value


def battery_frame(results: Iterable[TestResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        statistic, p = _reported(result)
        rows.append(
            {
                "test": result.label,
                "statistic": statistic,
                "p_value": p,
                "pi0": result.tunings.pi0,
                "tunings": _tuning_text(result),
            }
        )
    return pd.DataFrame(rows)


def render_battery(
    results: list[TestResult],
    fmt: OutputFormat = "text",
    precision: int = 3,
    context: dict | None = None,
) -> str:
    """``context`` (target, r, T, n, mse_ratio...) is printed above the text table
    and included verbatim in the JSON payload."""
    context = context or {}
    if fmt == "json":
        payload = {**context, "results": [result.to_dict() for result in results]}
        return json.dumps(payload, indent=2, default=float)
    frame = battery_frame(results)
    if fmt == "csv":
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, float_format=f"%.{precision}f", lineterminator="\n")
        return buffer.getvalue()

    table = PrettyTable(["test", "statistic", "p-value", "tunings"])
    table.align["tunings"] = "l"
    for row in frame.itertuples(index=False):
        statistic = f"{row.statistic:.{precision}f}"
        table.add_row([row.test, statistic, f"{row.p_value:.{precision}f}", row.tunings])
    header = ", ".join(f"{key}={value}" for key, value in context.items())
    return f"{header}\n{table.get_string()}" if header else table.get_string()


@dataclass(frozen=True)
class TargetBattery:
    """The battery of one target series, or the error that stopped it."""

    target: str
    context: dict = field(default_factory=dict)
    results: list[TestResult] = field(default_factory=list)
    error: str | None = None


def _tunings_header(rows: list[TargetBattery]) -> str:
    for row in rows:
        if row.results:
            return "; ".join(f"{r.label}: {_tuning_text(r)}" for r in row.results)
    return ""


def render_target_table(
    rows: list[TargetBattery], fmt: OutputFormat = "text", precision: int = 3
) -> str:
    """One row of p-values per target series."""
    if fmt == "json":
        payload = [
            {"target": row.target, "error": row.error}
            if row.error
            else {**row.context, "results": [result.to_dict() for result in row.results]}
            for row in rows
        ]
        return json.dumps({"targets": payload}, indent=2, default=float)
    if fmt == "csv":
        frames = []
        for row in rows:
            frame = battery_frame(row.results) if row.results else pd.DataFrame([{}])
            frame.insert(0, "target", row.target)
            frame["error"] = row.error or ""
            frames.append(frame)
        buffer = io.StringIO()
        pd.concat(frames, ignore_index=True).to_csv(
            buffer, index=False, float_format=f"%.{precision}f", lineterminator="\n"
        )
        return buffer.getvalue()

    labels: list[str] = []
    for row in rows:
        labels.extend(r.label for r in row.results if r.label not in labels)
    table = PrettyTable(["target", "r", "mse ratio", *labels])
    table.align["target"] = "l"
    for row in rows:
        if row.error:
            table.add_row([row.target, "-", "-", *(["failed"] * len(labels))])
            continue
        p_values = {r.label: _reported(r)[1] for r in row.results}
        table.add_row(
            [
                row.target,
                row.context.get("r", "-"),
                f"{row.context.get('mse_ratio', float('nan')):.{precision}f}",
                *(f"{p_values.get(label, float('nan')):.{precision}f}" for label in labels),
            ]
        )
    header = _tunings_header(rows)
    return f"p-values ({header})\n{table.get_string()}" if header else table.get_string()

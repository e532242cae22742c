"""CSV panel ingestion and the known-regressor grammar.

Files are comma-separated, UTF-8, with a mandatory header row and ``.`` as the
decimal mark. The target column is excluded from the predictor panel. Data are
expected to be already transformed (differenced, deflated...) by the user.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from factor_eval.core import (
    MIN_SAMPLE_LENGTH,
    DataValidationError,
    InvalidConfig,
    MissingValues,
    NonNumericColumn,
    PanelData,
    TooShortSeries,
)
from factor_eval.dgp import SimulatedDataset
from factor_eval.log import logger

MISSING_TOKENS = frozenset({"", "na", "nan", "n/a", "null", "none", "."})

_TERM = re.compile(r"^(?:(?P<intercept>intercept|const)|ar\((?P<order>\d+)\))$")


@dataclass(frozen=True)
class KnownRegressors:
    """``intercept`` plus ``ar(p)``: the lags ``y_t, ..., y_{t-p+1}``."""

    intercept: bool = True
    ar_order: int = 1

    @property
    def lost_rows(self) -> int:
        return max(self.ar_order - 1, 0)

    def design(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        """Rows ``t = p-1..T-1`` of ``[1, y_t, ..., y_{t-p+1}]``."""
        T = y.shape[0]
        start = self.lost_rows
        columns = []
        if self.intercept:
            columns.append(np.ones(T - start))
        for lag in range(self.ar_order):
            columns.append(y[start - lag : T - lag])
        return np.column_stack(columns)


def parse_known_regressors(text: str) -> KnownRegressors:
    intercept, order = False, 0
    terms = [term.strip().lower() for term in text.split("+") if term.strip()]
    if not terms:
        raise InvalidConfig("no known regressors given")
    for term in terms:
        match = _TERM.match(term.replace(" ", ""))
        if match is None:
            raise InvalidConfig(
                f"unknown regressor term {term!r}; use 'intercept' and 'ar(p)' joined by '+'"
            )
        if match.group("intercept"):
            intercept = True
        else:
            order = int(match.group("order"))
            if order < 1:
                raise InvalidConfig("ar(p) needs p >= 1")
    return KnownRegressors(intercept=intercept, ar_order=order)


def _parse_column(name: str, raw: pd.Series) -> NDArray[np.float64]:
    values = np.empty(len(raw))
    for row, cell in enumerate(raw.tolist(), start=1):
        text = str(cell).strip()
        if text.lower() in MISSING_TOKENS:
            raise MissingValues(
                f"missing value in column {name!r} at data row {row}", row=row, column=name
            )
        try:
            values[row - 1] = float(text)
        except ValueError:
            raise NonNumericColumn(
                f"non-numeric value {text!r} in column {name!r} at data row {row}",
                row=row,
                column=name,
            ) from None
        if not np.isfinite(values[row - 1]):
            raise MissingValues(
                f"non-finite value {text!r} in column {name!r} at data row {row}",
                row=row,
                column=name,
            )
    return values


def read_panel_csv(
    path: str | Path, target: str | None = None, index_col: str | None = None
) -> tuple[NDArray[np.float64] | None, NDArray[np.float64], list[str]]:
    """Return ``(y, X, series_names)``; ``y`` is None when no target is given."""
    frame = pd.read_csv(path, sep=",", dtype=str, keep_default_na=False, encoding="utf-8")
    if index_col is not None:
        if index_col not in frame.columns:
            raise DataValidationError(
                f"index column {index_col!r} not in the header", column=index_col
            )
        frame = frame.drop(columns=[index_col])
    if target is not None and target not in frame.columns:
        raise DataValidationError(f"target column {target!r} not in the header", column=target)
    if len(frame) < MIN_SAMPLE_LENGTH:
        raise TooShortSeries(f"T={len(frame)} rows is below the minimum of {MIN_SAMPLE_LENGTH}")

    parsed = {name: _parse_column(name, frame[name]) for name in frame.columns}
    y = parsed.pop(target) if target is not None else None
    names = list(parsed)
    if not names:
        raise DataValidationError("the file has no predictor columns besides the target")
    X = np.column_stack([parsed[name] for name in names])
    logger.info(f"Read {path}: T={X.shape[0]}, N={X.shape[1]}, target={target}")
    return y, X, names


def build_panel(
    y: NDArray[np.float64], X: NDArray[np.float64], regressors: KnownRegressors
) -> PanelData:
    """Align ``y``, ``X`` and the known regressors, dropping rows lost to the lags."""
    start = regressors.lost_rows
    W = regressors.design(y)
    return PanelData.from_arrays(X[start:], y[start:], W)


def load_panel(
    path: str | Path,
    target: str,
    regressor_spec: str = "ar(1)+intercept",
    index_col: str | None = None,
) -> PanelData:
    return load_target_panels(path, [target], regressor_spec, index_col)[target]


def write_dataset_csv(dataset: SimulatedDataset, path: str | Path, target: str = "y") -> None:
    dataset.to_frame(target).to_csv(path, index=False, lineterminator="\n")


def load_target_panels(
    path: str | Path,
    targets: list[str] | None = None,
    regressor_spec: str = "ar(1)+intercept",
    index_col: str | None = None,
) -> dict[str, PanelData]:
    """One panel per target column, each excluding its own target from ``X``.

    ``targets=None`` uses every column in turn. The CSV is read once.
    """
    _, X, names = read_panel_csv(path, None, index_col)
    chosen = list(names) if targets is None else list(dict.fromkeys(targets))
    unknown = [target for target in chosen if target not in names]
    if unknown:
        raise DataValidationError(
            f"target column(s) {unknown} not in the header", column=unknown[0]
        )
    regressors = parse_known_regressors(regressor_spec)
    panels = {}
    for target in chosen:
        j = names.index(target)
        panels[target] = build_panel(X[:, j], np.delete(X, j, axis=1), regressors)
    return panels

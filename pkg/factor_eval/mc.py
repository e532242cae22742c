"""Monte Carlo rejection frequencies (size and power) of the out-of-sample tests."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import pandas as pd
from prettytable import PrettyTable  # type: ignore
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    field_validator,
    model_validator,
)
from tqdm import tqdm

from factor_eval.core import NumericalError, SplitConfig, TestTunings, compute_split_indices
from factor_eval.dgp import DgpConfig, generate_dataset
from factor_eval.forecast import (
    Augmentation,
    ForecastErrorStreams,
    recursive_forecast_errors,
)
from factor_eval.log import logger
from factor_eval.pca import select_num_factors_icp1
from factor_eval.stats import TestId, Variance, evaluate, omega2

FAILURE_SHARE_LIMIT = 0.01
TEST_LABELS = ("g1", "g2", "g3", "g4", "g2adj", "g3adj", "g4adj")


class RSelection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["fixed", "icp1"] = "fixed"
    r: PositiveInt | None = None
    r_max: PositiveInt = 10


class ExperimentSpec(BaseModel):
    """A grid of designs (beta values x tuning points) and the statistics to run on each."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dgp: DgpConfig = DgpConfig()
    beta_grid: list[float | list[float]] = [0.0]
    tests: list[str] = ["g1", "g2adj", "g3adj", "g4adj"]
    tunings: TestTunings = TestTunings()
    tuning_grid: list[dict[str, float]] = [{}]
    replications: PositiveInt = 500
    nominal_level: float = Field(0.05, gt=0.0, lt=0.5)
    feasible: bool = True
    r_selection: RSelection = RSelection()
    variance: Variance = "iid"
    augmentation: Augmentation = "pc"

    @field_validator("tests")
    @classmethod
    def known_tests(cls, v: list[str]) -> list[str]:
        unknown = [label for label in v if label not in TEST_LABELS]
        if unknown or not v:
            raise ValueError(f"tests must be a nonempty subset of {TEST_LABELS}, got {v}")
        return v

    @field_validator("tuning_grid")
    @classmethod
    def nonempty_grid(cls, v: list[dict[str, float]]) -> list[dict[str, float]]:
        return v or [{}]

    @model_validator(mode="after")
    def betas_match_r(self):
        for beta in self.beta_grid:
            if isinstance(beta, list) and len(beta) != self.dgp.r:
                raise ValueError(f"beta {beta} must have r={self.dgp.r} entries")
        return self

    def tuning_points(self) -> list[tuple[str, TestTunings]]:
        return [
            (tuning_label(point), self.tunings.with_overrides(point))
            for point in self.tuning_grid
        ]


def tuning_label(point: dict[str, float]) -> str:
    return ",".join(f"{key}={value:g}" for key, value in sorted(point.items())) or "default"


def beta_label(beta: float | list[float]) -> str:
    if isinstance(beta, list):
        if len(set(beta)) == 1:
            return f"{beta[0]:g}"
        return "(" + ",".join(f"{b:g}" for b in beta) + ")"
    return f"{beta:g}"


def _split_label(label: str) -> tuple[TestId, bool]:
    return TestId(label.removesuffix("adj")), label.endswith("adj")


@dataclass(frozen=True)
class RejectionCell:
    beta: str
    tuning: str
    test: str
    rejections: int
    completed: int
    failures: int

    @property
    def adjusted(self) -> bool:
        return self.test.endswith("adj")

    @property
    def rejection_frequency(self) -> float:
        return self.rejections / self.completed if self.completed else math.nan

    @property
    def mc_stderr(self) -> float:
        p = self.rejection_frequency
        return math.sqrt(p * (1.0 - p) / self.completed) if self.completed else math.nan

    @property
    def invalid(self) -> bool:
        total = self.completed + self.failures
        return total == 0 or self.failures / total > FAILURE_SHARE_LIMIT


@dataclass(frozen=True)
class RejectionTable:
    cells: list[RejectionCell]
    nominal_level: float
    replications: int

    def cell(self, beta: str, tuning: str, test: str) -> RejectionCell:
        for cell in self.cells:
            if (cell.beta, cell.tuning, cell.test) == (beta, tuning, test):
                return cell
        raise KeyError((beta, tuning, test))

    def invalid_cells(self) -> list[RejectionCell]:
        return [cell for cell in self.cells if cell.invalid]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "test": cell.test.removesuffix("adj"),
                    "adjusted": cell.adjusted,
                    "beta": cell.beta,
                    "tuning": cell.tuning,
                    "rejection": cell.rejection_frequency,
                    "stderr": cell.mc_stderr,
                    "failures": cell.failures,
                    "replications": cell.completed,
                }
                for cell in self.cells
            ]
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.6f", lineterminator="\n")

    def render_text(self, precision: int = 3) -> str:
        """Rows are beta values, columns are ``test @ tuning`` pairs."""
        columns: list[tuple[str, str]] = []
        for cell in self.cells:
            if (cell.test, cell.tuning) not in columns:
                columns.append((cell.test, cell.tuning))
        betas: list[str] = []
        for cell in self.cells:
            if cell.beta not in betas:
                betas.append(cell.beta)
        lookup = {(c.beta, c.tuning, c.test): c for c in self.cells}

        headers = [
            test if tuning == "default" else f"{test} @ {tuning}" for test, tuning in columns
        ]
        table = PrettyTable(["beta", *headers])
        table.title = f"Size/Power (nom {self.nominal_level:.0%}), R={self.replications}"
        for beta in betas:
            row = [beta]
            for test, tuning in columns:
                cell = lookup[(beta, tuning, test)]
                text = f"{cell.rejection_frequency:.{precision}f}"
                row.append(text + ("*" if cell.invalid else ""))
            table.add_row(row)
        return table.get_string()


def _streams_for(
    spec: ExperimentSpec, dgp: DgpConfig, beta_idx: int, rep_idx: int, pi0: float
) -> ForecastErrorStreams:
    ds = generate_dataset(dgp, seed=[spec.dgp.seed, beta_idx, rep_idx])
    split = compute_split_indices(dgp.T, SplitConfig(pi0=pi0))
    if spec.r_selection.method == "icp1":
        in_sample = ds.panel.X[: split.k0]
        r_max = min(spec.r_selection.r_max, min(in_sample.shape) - 1)
        r = select_num_factors_icp1(in_sample, r_max)
    else:
        r = spec.r_selection.r or dgp.r
    return recursive_forecast_errors(
        ds.panel,
        split,
        r,
        F_true=None if spec.feasible else ds.F_true,
        augmentation=spec.augmentation,
    )


def run_replication(
    spec: ExperimentSpec, beta_idx: int, rep_idx: int
) -> dict[tuple[str, str], bool]:
    """Rejection decision of every (tuning, test) pair for one replication."""
    dgp = spec.dgp.with_beta(spec.beta_grid[beta_idx])
    decisions: dict[tuple[str, str], bool] = {}
    streams_by_pi0: dict[float, ForecastErrorStreams] = {}
    for label, tunings in spec.tuning_points():
        for test in spec.tests:
            test_id, adjusted = _split_label(test)
            cfg = tunings.for_test(test_id)
            if cfg.pi0 not in streams_by_pi0:
                streams_by_pi0[cfg.pi0] = _streams_for(spec, dgp, beta_idx, rep_idx, cfg.pi0)
            result = evaluate(
                test_id,
                streams_by_pi0[cfg.pi0],
                cfg,
                feasible=spec.feasible,
                adjusted=adjusted,
                variance=spec.variance,
            )
            p = result.p_value_adjusted if adjusted else result.p_value
            decisions[(label, test)] = p < spec.nominal_level  # type: ignore[operator]
    return decisions


def _check_tunings(spec: ExperimentSpec) -> None:
    # raises DegenerateTuning / DegenerateSplit before any replication runs
    for _, tunings in spec.tuning_points():
        for test in spec.tests:
            cfg = tunings.for_test(_split_label(test)[0])
            compute_split_indices(spec.dgp.T, cfg)
            omega2(_split_label(test)[0], cfg, 1.0)


def run_experiment(
    spec: ExperimentSpec, max_workers: int = 1, progress: bool = True
) -> RejectionTable:
    """
    Runs every replication of an experiment and tallies the rejections.

    Args:
        spec (ExperimentSpec): Design, beta grid, tuning grid, tests and seed.
        max_workers (int): Worker threads; the table does not depend on it.
        progress (bool): Whether to show a tqdm bar.

    Returns:
        RejectionTable: One cell per beta, tuning point and test. A replication
        that raises a NumericalError is logged and counted as a failure.
    """
    _check_tunings(spec)
    points = spec.tuning_points()
    R = spec.replications
    n_beta = len(spec.beta_grid)
    outcomes: list[list[dict | None]] = [[None] * R for _ in range(n_beta)]

    logger.info(
        f"Running {n_beta} beta value(s) x {len(points)} tuning point(s) x "
        f"{len(spec.tests)} test(s), R={R}, N={spec.dgp.N}, T={spec.dgp.T}"
    )
    jobs = [(b, rep) for b in range(n_beta) for rep in range(R)]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(run_replication, spec, b, rep): (b, rep) for b, rep in jobs}
        bar = tqdm(total=len(futures), desc="replications", disable=not progress)
        for future in as_completed(futures):
            b, rep = futures[future]
            try:
                outcomes[b][rep] = future.result()
            except NumericalError as e:
                logger.error(
                    f"beta #{b}, replication {rep} failed ({type(e).__name__}, t={e.t}): {e}"
                )
            bar.update(1)
        bar.close()

    cells = []
    for b, beta in enumerate(spec.beta_grid):
        done = [outcome for outcome in outcomes[b] if outcome is not None]
        failures = R - len(done)
        for label, _ in points:
            for test in spec.tests:
                cell = RejectionCell(
                    beta=beta_label(beta),
                    tuning=label,
                    test=test,
                    rejections=sum(outcome[(label, test)] for outcome in done),
                    completed=len(done),
                    failures=failures,
                )
                if cell.invalid:
                    logger.warning(
                        f"cell beta={cell.beta}, {label}, {test}: "
                        f"{failures}/{R} replications failed"
                    )
                cells.append(cell)
    return RejectionTable(cells=cells, nominal_level=spec.nominal_level, replications=R)

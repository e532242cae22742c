"""Domain types, tuning configuration and split-index arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MIN_SAMPLE_LENGTH = 10
MIN_SERIES = 2


class FactorEvalError(Exception):
    """Base class of every error raised by factor_eval."""


class InvalidConfig(FactorEvalError, ValueError):
    pass


class DegenerateSplit(InvalidConfig):
    """The sample is too short for the chosen split fractions."""


class DegenerateTuning(InvalidConfig):
    """A variance formula evaluates to a non-positive value for the tunings."""


class DataValidationError(FactorEvalError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class NonNumericColumn(DataValidationError):
    pass


class MissingValues(DataValidationError):
    pass


class TooShortSeries(DataValidationError):
    pass


class NumericalError(FactorEvalError, ArithmeticError):
    """Numerical breakdown; ``t`` is set when raised inside the expanding window."""

    t: int | None = None


class RankDeficient(NumericalError):
    pass


class SingularEigenvalues(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class DegenerateVariance(NumericalError):
    pass


def _frozen(array: NDArray[np.float64]) -> NDArray[np.float64]:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PanelData:
    """Predictor panel ``X`` (T x N), target ``y`` (T) and known regressors ``W`` (T x k).

    Row ``t`` of ``X`` and ``W`` is the information available when forecasting
    ``y[t + 1]``. No intercept is ever added to ``W`` on the caller's behalf.
    """

    X: NDArray[np.float64]
    y: NDArray[np.float64]
    W: NDArray[np.float64]

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).ravel()
        W = np.array(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if X.ndim != 2 or W.ndim != 2:
            raise InvalidConfig("X and W must be two-dimensional (rows = time)")
        T = X.shape[0]
        if y.shape[0] != T or W.shape[0] != T:
            raise InvalidConfig(
                f"X, y and W must share T: got {X.shape[0]}, {y.shape[0]}, {W.shape[0]}"
            )
        if T < MIN_SAMPLE_LENGTH:
            raise TooShortSeries(f"T={T} is below the minimum of {MIN_SAMPLE_LENGTH}")
        if X.shape[1] < MIN_SERIES:
            raise InvalidConfig(f"the panel needs N >= {MIN_SERIES} series, got {X.shape[1]}")
        for name, block in (("X", X), ("y", y), ("W", W)):
            bad = np.argwhere(~np.isfinite(block))
            if bad.size:
                row = int(bad[0][0])
                column = int(bad[0][1]) if bad.shape[1] > 1 else None
                raise MissingValues(
                    f"{name} has a missing or non-finite value at row {row}"
                    + (f", column {column}" if column is not None else ""),
                    row=row,
                    column=None if column is None else str(column),
                )
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "W", _frozen(W))

    @classmethod
    def from_arrays(cls, X: ArrayLike, y: ArrayLike, W: ArrayLike) -> PanelData:
        return cls(np.asarray(X), np.asarray(y), np.asarray(W))  # type: ignore[arg-type]

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.W.shape[1]


class SplitConfig(BaseModel):
    """Tuning fractions shared by the four statistics."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pi0: float = Field(0.5, gt=0.0, lt=1.0)
    mu0: float = Field(0.4, gt=0.0, lt=1.0)
    tau0: float = Field(0.8, gt=0.0, lt=1.0)
    lambda1: float = Field(1.0, gt=0.0, le=1.0)
    lambda2: float = Field(0.65, gt=0.0, le=1.0)

    @field_validator("mu0")
    @classmethod
    def mu0_not_half(cls, v: float) -> float:
        if v == 0.5:
            raise ValueError("mu0 must differ from 0.5 (the encompassing variance degenerates)")
        return v

    def with_overrides(self, **overrides: float) -> SplitConfig:
        return SplitConfig(**{**self.model_dump(), **overrides})

    @classmethod
    def recommended(cls, tau0: float = 0.8, **overrides: float) -> SplitConfig:
        """Tunings following the averaging recommendation lambda = 0.5 * tau0 + 0.5."""
        lam = 0.5 * tau0 + 0.5
        return cls(**{"tau0": tau0, "lambda1": lam, "lambda2": lam, **overrides})


@dataclass(frozen=True)
class SplitIndices:
    T: int
    k0: int
    n: int
    m0: int
    l1: int
    l2: int
    tau_floor: int


def floor_fraction(count: int, fraction: float) -> int:
    """``floor(count * fraction)`` evaluated on the decimal value of ``fraction``.

    ``floor(500 * 0.7)`` must be 350 even though ``0.7`` is stored as
    0.69999999999999995559 in binary floating point.
    """
    return math.floor(Fraction(repr(float(fraction))) * count)


def compute_split_indices(T: int, cfg: SplitConfig) -> SplitIndices:
    """
    Turns the split fractions of one statistic into integer sample positions.

    Args:
        T (int): Number of observations of the target series.
        cfg (SplitConfig): In-sample share and the statistic's window fractions.

    Returns:
        SplitIndices: ``k0`` in-sample points, ``n = T - k0`` forecasts and the
        window lengths ``m0``, ``l1``, ``l2`` and ``floor(n * tau0)``.

    Raises:
        DegenerateSplit: If any window would be empty or longer than ``n``.
    """
    if T < MIN_SAMPLE_LENGTH:
        raise DegenerateSplit(f"T={T} is below the minimum of {MIN_SAMPLE_LENGTH}")
    k0 = floor_fraction(T, cfg.pi0)
    n = T - k0
    m0 = floor_fraction(n, cfg.mu0)
    l1 = floor_fraction(n, cfg.lambda1)
    l2 = floor_fraction(n, cfg.lambda2)
    tau_floor = floor_fraction(n, cfg.tau0)

    problems = []
    if k0 < 1:
        problems.append(f"k0={k0}")
    if not 1 <= m0 < n:
        problems.append(f"m0={m0} with n={n}")
    if l1 < 1 or l2 < 1:
        problems.append(f"l1={l1}, l2={l2}")
    if tau_floor + 1 > n:
        problems.append(f"floor(n*tau0)={tau_floor} with n={n}")
    if problems:
        raise DegenerateSplit(
            f"T={T} is too small for {cfg.model_dump()}: " + "; ".join(problems)
        )
    return SplitIndices(T=T, k0=k0, n=n, m0=m0, l1=l1, l2=l2, tau_floor=tau_floor)


class TestTunings(BaseModel):
    """One SplitConfig per statistic; defaults are the empirical-workflow tunings."""

    __test__ = False
    model_config = ConfigDict(frozen=True, extra="forbid")

    g1: SplitConfig = SplitConfig(mu0=0.4)
    g2: SplitConfig = SplitConfig(lambda1=1.0, lambda2=0.65)
    g3: SplitConfig = SplitConfig(tau0=0.8, lambda2=0.6)
    g4: SplitConfig = SplitConfig(tau0=0.8, lambda1=0.6)

    @model_validator(mode="before")
    @classmethod
    def keep_statistic_defaults(cls, data):
        """A partial ``gN`` mapping only replaces the fields it names."""
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for name in ("g1", "g2", "g3", "g4"):
            section = data.get(name)
            if isinstance(section, dict):
                data[name] = {**cls.model_fields[name].default.model_dump(), **section}
        return data

    def for_test(self, test_id: str) -> SplitConfig:
        return getattr(self, str(test_id))

    def with_overrides(self, overrides: dict[str, float]) -> TestTunings:
        """Apply ``{"g2.lambda2": 0.7, "pi0": 0.6}``-style overrides.

        A key without a ``gN.`` prefix applies to every statistic.
        """
        fields = {name: getattr(self, name).model_dump() for name in ("g1", "g2", "g3", "g4")}
        for key, value in overrides.items():
            test_id, _, field = key.rpartition(".")
            targets = [test_id] if test_id else list(fields)
            for target in targets:
                if target not in fields:
                    raise InvalidConfig(f"unknown statistic {target!r} in tuning key {key!r}")
                fields[target][field] = value
        return TestTunings(**{name: SplitConfig(**values) for name, values in fields.items()})

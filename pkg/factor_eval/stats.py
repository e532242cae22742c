"""Out-of-sample test statistics for the factor-augmented forecast.

All four statistics compare the restricted error stream ``u1`` with the
factor-augmented stream ``u2`` (``u2_hat`` for estimated factors, ``u2_tilde``
for observed ones) over the ``n`` recursive forecasts, normalised by
``omega`` where ``omega^2`` is a closed-form multiple of ``phi^2``, the
variance of the squared errors ``u2^2``. Rejection is in the upper tail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import StrEnum
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from factor_eval.core import (
    DegenerateTuning,
    DegenerateVariance,
    InvalidConfig,
    SplitConfig,
    SplitIndices,
    TestTunings,
    compute_split_indices,
)
from factor_eval.forecast import ForecastErrorStreams
from factor_eval.log import logger
from factor_eval.utils.summation import compensated_prefix_sums, compensated_sum

VARIANCE_FLOOR = 1e-14

Variance = Literal["iid", "newey-west", "andrews"]


class TestId(StrEnum):
    __test__ = False

    G1 = "g1"
    G2 = "g2"
    G3 = "g3"
    G4 = "g4"


ADJUSTABLE = (TestId.G2, TestId.G3, TestId.G4)


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    test_id: TestId
    statistic: float
    phi2: float
    omega2: float
    p_value: float
    tunings: SplitConfig
    feasible: bool = True
    adjustment: float | None = None
    adjusted_statistic: float | None = None
    p_value_adjusted: float | None = None

    @property
    def label(self) -> str:
        return f"{self.test_id}adj" if self.adjusted_statistic is not None else str(self.test_id)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["test_id"] = str(self.test_id)
        payload["label"] = self.label
        payload["tunings"] = self.tunings.model_dump()
        return payload


def p_value(statistic: float) -> float:
    """Upper-tail standard normal probability ``1 - Phi(statistic)``."""
    return float(0.5 * special.erfc(statistic / math.sqrt(2.0)))


def _bartlett_long_run_variance(centered: NDArray[np.float64], bandwidth: float) -> float:
    n = centered.size
    total = compensated_sum(centered * centered) / n
    j = 1
    while j < bandwidth and j < n:
        weight = 1.0 - j / bandwidth
        total += 2.0 * weight * compensated_sum(centered[j:] * centered[:-j]) / n
        j += 1
    return total


def _andrews_bandwidth(centered: NDArray[np.float64]) -> float:
    """Bartlett plug-in bandwidth ``1.1447 (a1 n)^(1/3)`` from an AR(1) fit."""
    n = centered.size
    rho = compensated_sum(centered[1:] * centered[:-1]) / compensated_sum(
        centered[:-1] * centered[:-1]
    )
    rho = float(np.clip(rho, -0.97, 0.97))
    a1 = 4.0 * rho**2 / ((1.0 - rho) ** 2 * (1.0 + rho) ** 2)
    return 1.1447 * (a1 * n) ** (1.0 / 3.0)


def phi_hat2(u2: ArrayLike, variance: Variance = "iid", lags: int | None = None) -> float:
    """Variance of the squared forecast errors ``u2^2`` (divisor ``n``).

    ``variance="newey-west"`` and ``"andrews"`` replace the i.i.d. estimator with
    a Bartlett-kernel long-run variance; ``lags`` overrides the Newey-West rule
    ``floor(4 (n / 100)^(2/9))``.
    """
    squares = np.square(np.asarray(u2, dtype=float).ravel())
    n = squares.size
    if n < 2:
        raise InvalidConfig(f"phi^2 needs at least two errors, got {n}")
    centered = squares - compensated_sum(squares) / n
    if variance == "iid":
        result = compensated_sum(centered * centered) / n
    elif variance == "newey-west":
        L = math.floor(4 * (n / 100) ** (2 / 9)) if lags is None else lags
        result = _bartlett_long_run_variance(centered, L + 1)
    elif variance == "andrews":
        result = _bartlett_long_run_variance(centered, _andrews_bandwidth(centered))
    else:
        raise InvalidConfig(f"unknown variance estimator {variance!r}")
    if result < VARIANCE_FLOOR:
        raise DegenerateVariance(
            f"phi^2 = {result:.3e} (< {VARIANCE_FLOOR}): the squared errors are constant"
        )
    return float(result)


def averaged_variance_factor(lam: float, tau: float) -> float:
    """``omega^2 / phi^2`` of the averaged statistics as a function of the fixed fraction."""
    denom = lam * (1.0 - tau) ** 2
    if lam <= tau:
        return ((1.0 - tau) ** 2 + 2.0 * lam * (1.0 - tau + math.log(tau))) / denom
    return (1.0 - tau**2 + 2.0 * lam * ((1.0 - tau) * math.log(lam) + tau * math.log(tau))) / denom


def omega2(test_id: TestId | str, cfg: SplitConfig, phi2: float) -> float:
    test_id = TestId(test_id)
    if not phi2 > 0:
        raise InvalidConfig(f"phi2 must be positive, got {phi2}")
    match test_id:
        case TestId.G1:
            mu = cfg.mu0
            factor = (1.0 - 2.0 * mu) ** 2 / (4.0 * mu * (1.0 - mu))
        case TestId.G2:
            factor = abs(cfg.lambda1 - cfg.lambda2) / (cfg.lambda1 * cfg.lambda2)
        case TestId.G3:
            factor = averaged_variance_factor(cfg.lambda2, cfg.tau0)
        case TestId.G4:
            factor = averaged_variance_factor(cfg.lambda1, cfg.tau0)
    value = phi2 * factor
    if not value > 0:
        raise DegenerateTuning(f"omega^2 for {test_id} is {value:.3e} under {cfg.model_dump()}")
    return value


def _split_for(streams: ForecastErrorStreams, cfg: SplitConfig) -> SplitIndices:
    split = compute_split_indices(streams.split.T, cfg)
    if split.k0 != streams.split.k0:
        raise InvalidConfig(
            f"pi0={cfg.pi0} gives k0={split.k0} but the streams start at k0={streams.split.k0}"
        )
    return split


class _PrefixSums:
    """Leading-window sums of ``u1^2``, ``u2^2``, ``u1 u2`` and ``(u1 - u2)^2``."""

    def __init__(self, u1: NDArray[np.float64], u2: NDArray[np.float64]):
        self.u1_sq = compensated_prefix_sums(u1 * u1)
        self.u2_sq = compensated_prefix_sums(u2 * u2)
        self.cross = compensated_prefix_sums(u1 * u2)
        self.gap_sq = compensated_prefix_sums((u1 - u2) ** 2)


def _accuracy_core(sums: _PrefixSums, n: int, l1: int, l2: int) -> float:
    # n^{-1/2} [ (n / l1) sum^{l1} u1^2 - (n / l2) sum^{l2} u2^2 ]
    return (n / l1 * sums.u1_sq[l1] - n / l2 * sums.u2_sq[l2]) / math.sqrt(n)


def _tail_range(split: SplitIndices) -> range:
    return range(split.tau_floor + 1, split.n + 1)


def _raw_statistic(
    test_id: TestId, sums: _PrefixSums, split: SplitIndices, cfg: SplitConfig
) -> float:
    n, root_n = split.n, math.sqrt(split.n)
    match test_id:
        case TestId.G1:
            m0 = split.m0
            first = sums.cross[m0]
            second = sums.cross[n] - sums.cross[m0]
            return (sums.u1_sq[n] - 0.5 * (n / m0 * first + n / (n - m0) * second)) / root_n
        case TestId.G2:
            return _accuracy_core(sums, n, split.l1, split.l2)
        case TestId.G3:
            cores = [_accuracy_core(sums, n, l1, split.l2) for l1 in _tail_range(split)]
            return compensated_sum(cores) / (n * (1.0 - cfg.tau0))
        case TestId.G4:
            cores = [_accuracy_core(sums, n, split.l1, l2) for l2 in _tail_range(split)]
            return compensated_sum(cores) / (n * (1.0 - cfg.tau0))


def _raw_adjustment(
    test_id: TestId, sums: _PrefixSums, split: SplitIndices, cfg: SplitConfig
) -> float:
    n, root_n = split.n, math.sqrt(split.n)
    match test_id:
        case TestId.G2 | TestId.G3:
            return sums.gap_sq[split.l2] / (cfg.lambda2 * root_n)
        case TestId.G4:
            terms = [n / l2 * sums.gap_sq[l2] / root_n for l2 in _tail_range(split)]
            return compensated_sum(terms) / (n * (1.0 - cfg.tau0))
    raise InvalidConfig(f"{test_id} has no power adjustment")


def power_adjustment(
    test_id: TestId | str,
    streams: ForecastErrorStreams,
    cfg: SplitConfig,
    feasible: bool = True,
    variance: Variance = "iid",
) -> float:
    """Nonnegative power-enhancement term built from ``(u1 - u2)^2``, scaled by ``1/omega``."""
    test_id = TestId(test_id)
    split = _split_for(streams, cfg)
    u2 = streams.u2(feasible)
    omega = math.sqrt(omega2(test_id, cfg, phi_hat2(u2, variance)))
    return _raw_adjustment(test_id, _PrefixSums(streams.u1, u2), split, cfg) / omega


def evaluate(
    test_id: TestId | str,
    streams: ForecastErrorStreams,
    cfg: SplitConfig,
    feasible: bool = True,
    adjusted: bool | None = None,
    variance: Variance = "iid",
) -> TestResult:
    """Compute one statistic; ``adjusted`` defaults to True for g2, g3 and g4."""
    test_id = TestId(test_id)
    if adjusted is None:
        adjusted = test_id in ADJUSTABLE
    if adjusted and test_id not in ADJUSTABLE:
        raise InvalidConfig(f"{test_id} has no power adjustment")
    split = _split_for(streams, cfg)
    u2 = streams.u2(feasible)
    phi2 = phi_hat2(u2, variance)
    w2 = omega2(test_id, cfg, phi2)
    omega = math.sqrt(w2)
    sums = _PrefixSums(streams.u1, u2)
    statistic = _raw_statistic(test_id, sums, split, cfg) / omega

    adjustment = adjusted_statistic = p_adjusted = None
    if adjusted:
        adjustment = _raw_adjustment(test_id, sums, split, cfg) / omega
        adjusted_statistic = statistic + adjustment
        p_adjusted = p_value(adjusted_statistic)
    result = TestResult(
        test_id=test_id,
        statistic=float(statistic),
        phi2=phi2,
        omega2=w2,
        p_value=p_value(statistic),
        tunings=cfg,
        feasible=feasible,
        adjustment=adjustment,
        adjusted_statistic=adjusted_statistic,
        p_value_adjusted=p_adjusted,
    )
    logger.debug(
        f"{result.label}: statistic={statistic:.4f}, omega2={w2:.4e}, p={result.p_value:.4f}"
    )
    return result


def g1_encompassing(
    streams: ForecastErrorStreams, cfg: SplitConfig, feasible: bool = True, **kw
) -> TestResult:
    return evaluate(TestId.G1, streams, cfg, feasible, **kw)


def g2_accuracy(
    streams: ForecastErrorStreams, cfg: SplitConfig, feasible: bool = True, **kw
) -> TestResult:
    return evaluate(TestId.G2, streams, cfg, feasible, **kw)


def g3_averaged(
    streams: ForecastErrorStreams, cfg: SplitConfig, feasible: bool = True, **kw
) -> TestResult:
    return evaluate(TestId.G3, streams, cfg, feasible, **kw)


def g4_averaged(
    streams: ForecastErrorStreams, cfg: SplitConfig, feasible: bool = True, **kw
) -> TestResult:
    return evaluate(TestId.G4, streams, cfg, feasible, **kw)


def run_battery(
    streams: ForecastErrorStreams,
    tunings: TestTunings | None = None,
    feasible: bool = True,
    variance: Variance = "iid",
) -> list[TestResult]:
    """g1 and the power-enhanced g2, g3, g4, each under its own tunings."""
    tunings = tunings or TestTunings()
    return [
        evaluate(test_id, streams, tunings.for_test(test_id), feasible, variance=variance)
        for test_id in TestId
    ]

"""Recursive (expanding-window) pseudo out-of-sample forecast errors.

Indexing follows the sample ``t = 1..T`` of the model
``y_{t+1} = theta'w_t + beta'f_t + u_{t+1}``: at step ``t`` the regression uses
the pairs ``(z_s, y_{s+1})`` for ``s = 1..t-1`` and the forecast of ``y_{t+1}``
applies the coefficients to ``z_t``. In 0-based arrays step ``t`` trains on rows
``0..t-2`` against targets ``1..t-1`` and forecasts target ``t`` from row ``t-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from factor_eval.core import (
    IllConditioned,
    InvalidConfig,
    NumericalError,
    PanelData,
    SplitIndices,
)
from factor_eval.log import logger
from factor_eval.pca import extract_factors, rotation_matrix

CONDITION_LIMIT = 1e12

Augmentation = Literal["pc", "average"]


@dataclass(frozen=True)
class ForecastErrorStreams:
    """Aligned forecast errors for ``t = k0..T-1`` (entry ``i`` targets ``y_{k0+i+1}``)."""

    u1: NDArray[np.float64]
    u2_hat: NDArray[np.float64]
    split: SplitIndices
    r_used: int
    u2_tilde: NDArray[np.float64] | None = None
    factor_error: NDArray[np.float64] | None = None

    def __post_init__(self):
        n = self.split.n
        for name in ("u1", "u2_hat", "u2_tilde", "factor_error"):
            stream = getattr(self, name)
            if stream is not None and len(stream) != n:
                raise InvalidConfig(f"{name} has length {len(stream)}, expected n={n}")

    @property
    def n(self) -> int:
        return self.split.n

    def u2(self, feasible: bool) -> NDArray[np.float64]:
        if feasible:
            return self.u2_hat
        if self.u2_tilde is None:
            raise InvalidConfig(
                "the infeasible statistic needs observed factors (u2_tilde is missing)"
            )
        return self.u2_tilde

    def mse_ratio(self, feasible: bool = True) -> float:
        """Out-of-sample MSE of the unrestricted model over that of the restricted one."""
        u2 = self.u2(feasible)
        return float(np.mean(u2 * u2) / np.mean(self.u1 * self.u1))


def ols(Z: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
    """
    Least-squares coefficients of ``y`` on the columns of ``Z``.

    Args:
        Z (ArrayLike): ``m x p`` regressor matrix; a vector is one column.
        y (ArrayLike): ``m`` observations of the dependent variable.

    Returns:
        NDArray[np.float64]: The ``p`` coefficients.

    Raises:
        InvalidConfig: If ``Z`` and ``y`` disagree on ``m``.
        IllConditioned: If ``m < p`` or ``Z'Z`` is numerically singular.
    """
    Z =np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if Z.ndim == 1:
        Z = Z[:, None]
    m, p = Z.shape
    if y.shape[0] != m:
        raise InvalidConfig(f"Z has {m} rows but y has {y.shape[0]} entries")
    if m < p:
        raise IllConditioned(f"{m} observations cannot identify {p} coefficients")
    coef, _, _, singular_values = linalg.lstsq(Z, y, lapack_driver="gelsd")
    smallest = singular_values[-1]
    if smallest == 0 or (singular_values[0] / smallest) ** 2 >= CONDITION_LIMIT:
        raise IllConditioned(
            f"Z'Z has condition number >= {CONDITION_LIMIT:.0e} (collinear regressors)"
        )
    return coef


def _one_step_error(Z: NDArray, y: NDArray, t: int) -> float:
    """Forecast error of ``y_{t+1}`` from OLS over ``s = 1..t-1`` (1-based ``t``)."""
    coef = ols(Z[: t - 1], y[1:t])
    return float(y[t] - Z[t - 1] @ coef)


def _standardize(X: NDArray) -> NDArray:
    centered = X - X.mean(axis=0)
    scale = centered.std(axis=0)
    scale[scale == 0] = 1.0
    return centered / scale


def recursive_forecast_errors(
    data: PanelData,
    split: SplitIndices,
    r: int,
    F_true: ArrayLike | None = None,
    Lambda_true: ArrayLike | None = None,
    standardize: bool = False,
    augmentation: Augmentation = "pc",
) -> ForecastErrorStreams:
    if split.T != data.T:
        raise InvalidConfig(f"split was computed for T={split.T}, data has T={data.T}")
    r_used = 1 if augmentation == "average" else r
    if augmentation == "pc" and not 1 <= r <= min(split.k0, data.N):
        raise InvalidConfig(f"r={r} must lie in [1, min(k0, N)] = [1, {min(split.k0, data.N)}]")
    if split.k0 - 1 <= data.k + r_used:
        raise InvalidConfig(
            f"k0={split.k0} leaves too few observations for {data.k + r_used} regressors"
        )

    y, W, X = data.y, data.W, data.X
    F = None if F_true is None else np.asarray(F_true, dtype=float)
    if F is not None and F.shape[0] != data.T:
        raise InvalidConfig(f"F_true must have T={data.T} rows, got {F.shape[0]}")
    Lam = None if Lambda_true is None else np.asarray(Lambda_true, dtype=float)
    track_factor_error = (
        F is not None and Lam is not None and augmentation == "pc" and F.shape[1] == r
    )
    if F is not None and Lam is not None and not track_factor_error:
        logger.warning("factor approximation errors skipped: estimated and true r differ")

    n = split.n
    u1 = np.empty(n)
    u2_hat = np.empty(n)
    u2_tilde = np.empty(n) if F is not None else None
    factor_error = np.empty(n) if track_factor_error else None
    Z_tilde = None if F is None else np.hstack([W, F])

    for i, t in enumerate(range(split.k0, data.T)):
        try:
            u1[i] = _one_step_error(W, y, t)

            X_t = _standardize(X[:t]) if standardize else X[:t]
            if augmentation == "average":
                regressors = X_t.mean(axis=1, keepdims=True)
            else:
                fe = extract_factors(X_t, r)
                regressors = fe.F_hat
            u2_hat[i] = _one_step_error(np.hstack([W[:t], regressors]), y, t)

            if Z_tilde is not None:
                u2_tilde[i] = _one_step_error(Z_tilde, y, t)  # type: ignore[index]
            if factor_error is not None:
                H = rotation_matrix(fe, F[:t], Lam).H  # type: ignore[index]
                gap = fe.F_hat[t - 1] - H @ F[t - 1]  # type: ignore[index]
                factor_error[i] = float(gap @ gap)
        except NumericalError as e:
            e.t = t
            e.add_note(f"raised at recursion step t={t}")
            logger.error(f"Recursive estimation failed at t={t}: {e}")
            raise
        if i == 0 or t == data.T - 1:
            logger.debug(f"recursion t={t}: u1={u1[i]:.4f}, u2_hat={u2_hat[i]:.4f}")

    return ForecastErrorStreams(
        u1=u1,
        u2_hat=u2_hat,
        split=split,
        r_used=r_used,
        u2_tilde=u2_tilde,
        factor_error=factor_error,
    )

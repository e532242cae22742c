"""Principal-components factor extraction, IC_p1 factor-number selection and
rotation diagnostics.

Factors are the leading eigenvectors of ``(N t)^-1 X_t X_t'`` scaled so that
``F_hat' F_hat / t = I_r``; loadings are ``Lambda_hat = X_t' F_hat / t``. When
``N < t`` the same factors are obtained from the N x N matrix
``(N t)^-1 X_t' X_t``, which shares its nonzero eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from factor_eval.core import InvalidConfig, RankDeficient, SingularEigenvalues
from factor_eval.log import logger

EIGEN_FLOOR = 1e-12

Route = Literal["auto", "time", "cross"]


@dataclass(frozen=True)
class FactorEstimate:
    F_hat: NDArray[np.float64]
    Lambda_hat: NDArray[np.float64]
    D2: NDArray[np.float64]
    t: int
    r: int

    @property
    def common_component(self) -> NDArray[np.float64]:
        return self.F_hat @ self.Lambda_hat.T


@dataclass(frozen=True)
class RotationDiagnostics:
    H: NDArray[np.float64]
    avg_sq_error: float
    alpha_assumed: NDArray[np.float64]
    H_scaled: NDArray[np.float64]


def _leading_eigenpairs(S: NDArray[np.float64], r: int) -> tuple[NDArray, NDArray]:
    """Top-``r`` eigenpairs of the symmetric matrix ``S``, eigenvalues decreasing."""
    m = S.shape[0]
    values, vectors = linalg.eigh(S, subset_by_index=[m - r, m - 1])
    order = np.argsort(-values, kind="stable")
    return values[order], vectors[:, order]


def _pc_decomposition(
    X: NDArray[np.float64], r: int, route: Route
) -> tuple[NDArray, NDArray]:
    """Return (F_hat, D2) for the leading ``r`` principal components."""
    t, N = X.shape
    if route == "auto":
        route = "cross" if N < t else "time"
    if route == "time":
        D2, U = _leading_eigenpairs(X @ X.T / (N * t), r)
        F_hat = np.sqrt(t) * U
    else:
        D2, V = _leading_eigenpairs(X.T @ X / (N * t), r)
        if D2[-1] < EIGEN_FLOOR:
            raise RankDeficient(
                f"eigenvalue {r} of (Nt)^-1 X'X is {D2[-1]:.3e} (< {EIGEN_FLOOR})"
            )
        F_hat = X @ V / np.sqrt(N * D2)
    return F_hat, np.clip(D2, 0.0, None)


def _apply_sign_convention(F_hat: NDArray, Lambda_hat: NDArray) -> tuple[NDArray, NDArray]:
    # each loading column sums to a positive number; ties go to the first nonzero entry
    signs = np.ones(Lambda_hat.shape[1])
    for j in range(Lambda_hat.shape[1]):
        column = Lambda_hat[:, j]
        total = column.sum()
        scale = np.abs(column).sum()
        if abs(total) > 1e-12 * max(scale, 1e-300):
            signs[j] = np.sign(total)
        else:
            nonzero = np.flatnonzero(np.abs(column) > 1e-12 * max(scale, 1e-300))
            if nonzero.size and column[nonzero[0]] < 0:
                signs[j] = -1.0
    return F_hat * signs, Lambda_hat * signs


def extract_factors(X_t: ArrayLike, r: int, route: Route = "auto") -> FactorEstimate:
    """
    Principal-component factors of the first ``t`` rows of a panel.

    Args:
        X_t (ArrayLike): ``t x N`` panel, already transformed to stationarity.
        r (int): Number of factors, ``1 <= r <= min(t, N)``.
        route (Route): "time" decomposes the ``t x t`` matrix, "cross" the
            ``N x N`` one and "auto" picks the smaller.

    Returns:
        FactorEstimate: Factors normalised to ``F'F / t = I``, their loadings,
        and the ``r`` largest eigenvalues of ``X X' / (N t)``.

    Raises:
        InvalidConfig: If ``X_t`` is not a matrix or ``r`` is out of range.
        RankDeficient: If eigenvalue ``r`` falls below ``EIGEN_FLOOR``.
    """
    X =np.asarray(X_t, dtype=float)
    if X.ndim != 2:
        raise InvalidConfig("X_t must be a t x N matrix")
    t, N = X.shape
    if not 1 <= r <= min(t, N):
        raise InvalidConfig(f"r={r} must lie in [1, min(t, N)] = [1, {min(t, N)}]")

    F_hat, D2 = _pc_decomposition(X, r, route)
    if D2[-1] < EIGEN_FLOOR:
        raise RankDeficient(
            f"eigenvalue {r} of (Nt)^-1 X X' is {D2[-1]:.3e} (< {EIGEN_FLOOR})"
        )
    Lambda_hat = X.T @ F_hat / t
    F_hat, Lambda_hat = _apply_sign_convention(F_hat, Lambda_hat)
    return FactorEstimate(F_hat=F_hat, Lambda_hat=Lambda_hat, D2=D2, t=t, r=r)


def icp1_penalty(T: int, N: int) -> float:
    NT, NT1 = N * T, N + T
    return (NT1 / NT) * np.log(NT / NT1)


def icp1_criterion(X: ArrayLike, r_max: int) -> NDArray[np.float64]:
    """IC_p1 values for k = 1..r_max (entry ``k - 1`` belongs to ``k`` factors).

    For principal components the residual variance with ``k`` factors is
    ``V(k) = ||X||^2 / (NT) - (D2_1 + ... + D2_k)``.
    """
    X = np.asarray(X, dtype=float)
    T, N = X.shape
    if not 1 <= r_max <= min(T, N) - 1:
        raise InvalidConfig(f"r_max={r_max} must lie in [1, min(T, N) - 1] = [1, {min(T, N) - 1}]")
    route = "cross" if N < T else "time"
    S = X.T @ X if route == "cross" else X @ X.T
    D2, _ = _leading_eigenpairs(S / (N * T), r_max)
    total = np.sum(X * X) / (N * T)
    V = np.maximum(total - np.cumsum(np.clip(D2, 0.0, None)), np.finfo(float).tiny)
    k = np.arange(1, r_max + 1)
    return np.log(V) + k * icp1_penalty(T, N)


def select_num_factors_icp1(X: ArrayLike, r_max: int) -> int:
    criterion = icp1_criterion(X, r_max)
    r = int(np.argmin(criterion)) + 1
    logger.debug(f"IC_p1 over k=1..{r_max}: {np.round(criterion, 4).tolist()} -> r={r}")
    return r


def rotation_matrix(
    fe: FactorEstimate,
    F_true: ArrayLike,
    Lambda_true: ArrayLike,
    alpha: ArrayLike | None = None,
) -> RotationDiagnostics:
    """Rotation ``H`` mapping true factors to the estimated space, ``F_hat ~ F H'``.

    With strengths ``alpha`` the scaled form
    ``H_bar = (N B^-2 D2)^-1 B^-1 (F_hat'F / t) Lambda'Lambda B^-1`` with
    ``B = diag(N^(alpha_j / 2))`` is also reported; ``H = B^-1 H_bar B``.
    """
    F = np.asarray(F_true, dtype=float)
    Lam = np.asarray(Lambda_true, dtype=float)
    if F.shape != (fe.t, fe.r) or Lam.ndim != 2 or Lam.shape[1] != fe.r:
        raise InvalidConfig(
            f"F_true must be {fe.t} x {fe.r} and Lambda_true N x {fe.r}; "
            f"got {F.shape} and {Lam.shape}"
        )
    if Lam.shape[0] != fe.Lambda_hat.shape[0]:
        raise InvalidConfig("Lambda_true and Lambda_hat disagree on N")
    alpha_arr = np.ones(fe.r) if alpha is None else np.asarray(alpha, dtype=float).ravel()
    if alpha_arr.shape != (fe.r,) or np.any(alpha_arr <= 0) or np.any(alpha_arr > 1):
        raise InvalidConfig(f"alpha must hold {fe.r} entries in (0, 1]")
    if np.any(fe.D2 < EIGEN_FLOOR):
        raise SingularEigenvalues(f"D2 has an entry below {EIGEN_FLOOR}: {fe.D2}")

    N, t = Lam.shape[0], fe.t
    cross_moment = fe.F_hat.T @ F / t
    if np.all(alpha_arr == alpha_arr[0]):
        scale = N ** alpha_arr[0]
        H = np.linalg.solve(np.diag((N / scale) * fe.D2), cross_moment @ (Lam.T @ Lam / scale))
        H_scaled = H
    else:
        B_inv = np.diag(N ** (-alpha_arr / 2))
        B = np.diag(N ** (alpha_arr / 2))
        H_scaled = np.linalg.solve(
            np.diag(N * fe.D2 * N ** (-alpha_arr)),
            B_inv @ cross_moment @ Lam.T @ Lam @ B_inv,
        )
        H = B_inv @ H_scaled @ B
    residual = fe.F_hat - F @ H.T
    avg_sq_error = float(np.sum(residual * residual) / t)
    return RotationDiagnostics(
        H=H, avg_sq_error=avg_sq_error, alpha_assumed=alpha_arr, H_scaled=H_scaled
    )

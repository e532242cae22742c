"""Simulated factor-augmented forecasting designs.

``y_{t+1} = c + theta1 y_t + beta'f_t + u_{t+1}`` with a panel
``x_{i,t} = lambda_i'f_t + e_{i,t}`` whose loadings may be strong, weak or of
heterogeneous strength, AR(1) idiosyncratic errors with optional spatial
moving-average dependence, and i.i.d. or GARCH(1,1) forecast errors.

All randomness comes from a Philox generator seeded through ``SeedSequence``,
so a configuration (seed included) always replays the same dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveInt,
    model_validator,
)

from factor_eval.core import PanelData
from factor_eval.log import logger
from factor_eval.settings import DEFAULT_SEED

RHO_LIMIT = 0.97


class LoadingRegime(StrEnum):
    strong = "strong"
    weak = "weak"
    heterogeneous = "heterogeneous"

    def alphas(self, r: int) -> list[float]:
        match self:
            case LoadingRegime.strong:
                return [1.0] * r
            case LoadingRegime.weak:
                return [0.51] * r
            case LoadingRegime.heterogeneous:
                if r == 3:
                    return [1.0, 0.7, 0.51]
                return np.linspace(1.0, 0.51, r).round(4).tolist()


class DgpConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    N: PositiveInt = 800
    T: PositiveInt = 500
    r: PositiveInt = 3
    c: float = 1.25
    theta1: float = Field(0.5, gt=-1.0, lt=1.0)
    beta: list[float] = []
    regime: LoadingRegime | None = None
    alphas: list[float] = []
    D2diag: list[float] = []
    pi_perturb: float = 24.0
    rho_mean: float = 0.3
    rho_scale: float = 0.5
    cs_dependence: bool = False
    xi: float = 0.4
    K: PositiveInt = 5
    garch: bool = False
    garch_params: tuple[float, float, float] = (0.1, 0.1, 0.2)
    burn_in: NonNegativeInt = 200
    seed: NonNegativeInt = DEFAULT_SEED

    @model_validator(mode="before")
    @classmethod
    def fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        r = int(data.get("r", 3))
        if not data.get("beta"):
            data["beta"] = [0.0] * r
        elif np.isscalar(data["beta"]):
            data["beta"] = [float(data["beta"])] * r
        if not data.get("alphas"):
            data["alphas"] = LoadingRegime(data.get("regime") or "strong").alphas(r)
        if not data.get("D2diag"):
            data["D2diag"] = [float(r - j) for j in range(r)]
        return data

    @model_validator(mode="after")
    def check_shapes(self):
        for name in ("beta", "alphas", "D2diag"):
            if len(getattr(self, name)) != self.r:
                raise ValueError(f"{name} must have r={self.r} entries")
        if any(not 0.0 < a <= 1.0 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1]")
        if any(a < b for a, b in zip(self.alphas, self.alphas[1:])):
            raise ValueError("alphas must be sorted in decreasing order")
        if any(d <= 0 for d in self.D2diag):
            raise ValueError("D2diag entries must be positive")
        omega, alpha, eta = self.garch_params
        if omega <= 0 or alpha < 0 or eta < 0 or alpha + eta >= 1:
            raise ValueError("garch_params need omega > 0, alpha, eta >= 0 and alpha + eta < 1")
        return self

    def with_beta(self, beta: Sequence[float] | float) -> DgpConfig:
        if np.isscalar(beta):
            beta = [float(beta)] * self.r  # type: ignore[arg-type]
        return DgpConfig(**{**self.model_dump(), "beta": list(beta)})  # type: ignore[arg-type]


@dataclass(frozen=True)
class SimulatedDataset:
    panel: PanelData
    F_true: NDArray[np.float64]
    Lambda_true: NDArray[np.float64]
    u: NDArray[np.float64]

    def to_frame(self, target: str = "y") -> pd.DataFrame:
        """The panel as a DataFrame with the target first and series ``x1..xN``."""
        columns = {target: self.panel.y}
        columns.update({f"x{i + 1}": self.panel.X[:, i] for i in range(self.panel.N)})
        frame = pd.DataFrame(columns)
        frame.index = pd.RangeIndex(1, self.panel.T + 1, name="t")
        return frame


def make_rng(seed: int | Sequence[int] | np.random.SeedSequence) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def simulate_loadings(
    N: int,
    r: int,
    alphas: Sequence[float],
    D2diag: Sequence[float],
    pi_perturb: float,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Rows ``lambda_i = G_i D B_N / sqrt(N) + G_i pi / sqrt(N)`` with one ``G_i`` draw per row."""
    G = rng.standard_normal((N, r))
    D = np.sqrt(np.asarray(D2diag, dtype=float))
    B = N ** (np.asarray(alphas, dtype=float) / 2)
    return G * (D * B / np.sqrt(N)) + G * (pi_perturb / np.sqrt(N))


def simulate_idiosyncratics(
    N: int,
    T: int,
    rho: Sequence[float],
    cs_dependence: bool,
    xi: float,
    K: int,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """
    Draws the idiosyncratic part of the panel.

    Args:
        N (int): Number of predictors.
        T (int): Number of periods.
        rho (Sequence[float]): AR(1) coefficient of each series, clipped to
            ``+-RHO_LIMIT``.
        cs_dependence (bool): Whether shocks spill over to ``K`` neighbours on
            each side with weight ``xi``.
        xi (float): Spillover weight.
        K (int): Number of neighbours on each side.
        rng (np.random.Generator): Source of the Gaussian shocks.

    Returns:
        NDArray[np.float64]: A ``T x N`` matrix whose series start at zero and
        keep their innovation scaled by ``sqrt(1 - rho**2)``.
    """
    rho = np.clip(np.asarray(rho, dtype=float), -RHO_LIMIT, RHO_LIMIT)
    eps = rng.standard_normal((T, N))
    if cs_dependence:
        v = eps.copy()
        # neighbours beyond the panel edges are dropped
        for k in range(1, min(K, N - 1) + 1):
            v[:, k:] += xi * eps[:, :-k]
            v[:, :-k] += xi * eps[:, k:]
    else:
        v = eps
    scale = np.sqrt(1.0 - rho**2)
    e = np.empty((T, N))
    previous = np.zeros(N)
    for t in range(T):
        previous = rho * previous + scale * v[t]
        e[t] = previous
    return e


def simulate_garch(
    T: int, omega: float, alpha: float, eta: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    if alpha + eta >= 1:
        raise ValueError("GARCH(1,1) needs alpha + eta < 1")
    eps = rng.standard_normal(T)
    u = np.empty(T)
    sigma2 = omega / (1.0 - alpha - eta)
    for t in range(T):
        u[t] = np.sqrt(sigma2) * eps[t]
        sigma2 = omega + alpha * u[t] ** 2 + eta * sigma2
    return u


def generate_dataset(
    cfg: DgpConfig, seed: int | Sequence[int] | None = None
) -> SimulatedDataset:
    """Draw one dataset; ``seed`` overrides ``cfg.seed`` (used for Monte Carlo replications)."""
    root = np.random.SeedSequence(cfg.seed if seed is None else seed)
    loading_rng, factor_rng, rho_rng, panel_rng, error_rng = (
        make_rng(child) for child in root.spawn(5)
    )
    total = cfg.T + cfg.burn_in

    Lam = simulate_loadings(cfg.N, cfg.r, cfg.alphas, cfg.D2diag, cfg.pi_perturb, loading_rng)
    F = factor_rng.standard_normal((total, cfg.r))
    rho = cfg.rho_mean + cfg.rho_scale * rho_rng.standard_normal(cfg.N)
    E = simulate_idiosyncratics(cfg.N, total, rho, cfg.cs_dependence, cfg.xi, cfg.K, panel_rng)
    if cfg.garch:
        u = simulate_garch(total, *cfg.garch_params, error_rng)
    else:
        u = error_rng.standard_normal(total)

    beta = np.asarray(cfg.beta, dtype=float)
    y = np.empty(total)
    y[0] = cfg.c / (1.0 - cfg.theta1) + u[0]
    signal = F @ beta
    for t in range(total - 1):
        y[t + 1] = cfg.c + cfg.theta1 * y[t] + signal[t] + u[t + 1]

    keep = slice(cfg.burn_in, total)
    F, E, y, u = F[keep], E[keep], y[keep], u[keep]
    X = F @ Lam.T + E
    W = np.column_stack([np.ones(cfg.T), y])
    logger.debug(
        f"simulated N={cfg.N}, T={cfg.T}, alphas={cfg.alphas}, beta={cfg.beta}, "
        f"cs_dependence={cfg.cs_dependence}, garch={cfg.garch}"
    )
    return SimulatedDataset(
        panel=PanelData.from_arrays(X, y, W), F_true=F, Lambda_true=Lam, u=u
    )

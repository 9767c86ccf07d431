"""DDPM on the 3x3 lattice matrix: cosine beta schedule, forward marginal,
reverse-step mean, and the noise-prediction loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

_BETA_MIN = 1e-5
_BETA_MAX = 0.999


@dataclass(frozen=True)
class BetaSchedule:
    """Variance schedule: betas in (0, 1), alphas = 1 - beta, alpha_bars cumulative.

    Arrays index t = k+1 at position k; alpha_bar(0) is 1 by convention.
    """

    t_max: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        alphas = np.asarray(self.alphas, dtype=float)
        alpha_bars = np.asarray(self.alpha_bars, dtype=float)
        if betas.shape != (self.t_max,):
            raise ConfigError("betas must have length T")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        if not np.allclose(alphas, 1.0 - betas, rtol=0, atol=1e-15):
            raise ConfigError("alphas must equal 1 - betas")
        if not np.allclose(alpha_bars, np.cumprod(alphas), rtol=1e-12, atol=0):
            raise ConfigError("alpha_bars must be the cumulative product of alphas")
        if np.any(np.diff(alpha_bars) >= 0):
            raise ConfigError("alpha_bars must be strictly decreasing")
        if alpha_bars[-1] >= 0.01:
            raise ConfigError("alpha_bar at t=T must fall below 0.01")
        for name, arr in (("betas", betas), ("alphas", alphas), ("alpha_bars", alpha_bars)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.t_max:
            raise DomainError(f"t={t} outside [1, {self.t_max}]")

    def to_json_dict(self) -> dict:
        return {"t_max": self.t_max, "betas": self.betas.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BetaSchedule":
        betas = np.asarray(doc["betas"], dtype=float)
        alphas = 1.0 - betas
        return cls(int(doc["t_max"]), betas, alphas, np.cumprod(alphas))


def make_cosine_schedule(t_max: int, s: float = 0.008) -> BetaSchedule:
    """Cosine alpha_bar schedule with offset s, betas clipped to [1e-5, 0.999]."""
    if t_max < 2:
        raise ConfigError("T must be >= 2")
    grid = np.arange(t_max + 1, dtype=float) / t_max
    f = np.cos((grid + s) / (1.0 + s) * np.pi / 2.0) ** 2
    raw_bars = f / f[0]
    betas = np.clip(1.0 - raw_bars[1:] / raw_bars[:-1], _BETA_MIN, _BETA_MAX)
    alphas = 1.0 - betas
    return BetaSchedule(t_max, betas, alphas, np.cumprod(alphas))


def forward_sample_L(lattice0, t: int, schedule: BetaSchedule, rng: np.random.Generator):
    """Closed-form forward marginal: L_t = sqrt(abar_t) L_0 + sqrt(1-abar_t) eps."""
    lattice0 = np.asarray(lattice0, dtype=float)
    abar = schedule.alpha_bar(t)
    eps = rng.standard_normal((3, 3))
    return np.sqrt(abar) * lattice0 + np.sqrt(1.0 - abar) * eps, eps


def reverse_mean(lattice_t, eps_hat, t: int, schedule: BetaSchedule):
    """Reverse-transition mean: (L_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t)."""
    lattice_t = np.asarray(lattice_t, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    beta = schedule.beta(t)
    alpha = schedule.alpha(t)
    abar = schedule.alpha_bar(t)
    return (lattice_t - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)


def posterior_variance(t: int, schedule: BetaSchedule) -> float:
    """Fixed reverse variance beta_tilde_t = beta_t (1-abar_{t-1}) / (1-abar_t); zero at t=1."""
    beta = schedule.beta(t)
    return beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t))


def loss_L(eps, eps_hat) -> float:
    """Squared Frobenius distance between true and estimated lattice noise."""
    eps = np.asarray(eps, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if eps.shape != eps_hat.shape:
        raise ShapeError(f"noise shape {eps.shape} != estimate shape {eps_hat.shape}")
    return float(np.sum((eps - eps_hat) ** 2))

"""Score-based diffusion on fractional coordinates with the wrapped normal.

The forward process is F_t = wrap(F_0 + sigma_t * eps) under an exponential
sigma schedule; the score of the wrapped normal is evaluated by a truncated
integer-shift series whose omitted tail is below double-precision noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .crystal import wrap
from .errors import ConfigError, DomainError, ShapeError

# Monte Carlo sample count used when estimating the per-step loss weights.
DEFAULT_MC_SAMPLES = 100_000
_LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class SigmaSchedule:
    """Exponential noise schedule sigma_t = sigma_min * (sigma_max/sigma_min)^(t/T).

    `sigmas[k]` holds sigma for t = k+1; sigma(0) is defined as 0 (clean data),
    which makes the final predictor step a pure contraction.
    """

    t_max: int
    sigma_min: float
    sigma_max: float
    sigmas: np.ndarray

    def __post_init__(self):
        sigmas = np.asarray(self.sigmas, dtype=float)
        if sigmas.shape != (self.t_max,):
            raise ConfigError("sigmas must have length T")
        if np.any(sigmas <= 0) or np.any(np.diff(sigmas) <= 0):
            raise ConfigError("sigmas must be positive and strictly increasing")
        sigmas = sigmas.copy()
        sigmas.flags.writeable = False
        object.__setattr__(self, "sigmas", sigmas)

    @classmethod
    def make(cls, t_max: int, sigma_min: float = 0.005, sigma_max: float = 0.5) -> "SigmaSchedule":
        if t_max < 1:
            raise ConfigError("T must be >= 1")
        if not (0 < sigma_min < sigma_max):
            raise ConfigError("need 0 < sigma_min < sigma_max")
        t = np.arange(1, t_max + 1, dtype=float)
        sigmas = sigma_min * (sigma_max / sigma_min) ** (t / t_max)
        return cls(t_max, sigma_min, sigma_max, sigmas)

    def sigma(self, t: int) -> float:
        if t == 0:
            return 0.0
        if not 1 <= t <= self.t_max:
            raise DomainError(f"t={t} outside [0, {self.t_max}]")
        return float(self.sigmas[t - 1])

    def to_json_dict(self) -> dict:
        return {
            "t_max": self.t_max,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "sigmas": self.sigmas.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SigmaSchedule":
        return cls(
            int(doc["t_max"]), float(doc["sigma_min"]), float(doc["sigma_max"]),
            np.asarray(doc["sigmas"], dtype=float),
        )


def forward_sample_F(frac0, t: int, schedule: SigmaSchedule, rng: np.random.Generator):
    """Noise clean coordinates to level t; returns (F_t, eps)."""
    frac0 = np.asarray(frac0, dtype=float)
    sigma = schedule.sigma(t)
    eps = rng.standard_normal(frac0.shape)
    return wrap(frac0 + sigma * eps), eps


def _truncation(sigma: float) -> int:
    return max(3, int(np.ceil(5.0 * sigma)) + 3)


def _score_residual(u, sigma: float):
    """Score of the 1-D wrapped normal at canonical residuals u in [-0.5, 0.5)."""
    u = np.asarray(u, dtype=float)
    z_max = _truncation(sigma)
    shifts = np.arange(-z_max, z_max + 1, dtype=float)
    arg = u[..., None] + shifts
    expo = -0.5 * (arg / sigma) ** 2
    expo -= expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    return (-(arg / sigma**2) * w).sum(axis=-1) / w.sum(axis=-1)


def wrapped_normal_score(frac_t, frac0, sigma: float):
    """Gradient of log q(F_t | F_0) under the wrapped normal, entrywise.

    Residuals are canonicalized to [-0.5, 0.5) first, so the result is exactly
    periodic in both arguments.
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    u = wrap(np.asarray(frac_t, dtype=float) - np.asarray(frac0, dtype=float) + 0.5) - 0.5
    return _score_residual(u, sigma)


def lambda_weight(t: int, schedule: SigmaSchedule, mc_samples: int = DEFAULT_MC_SAMPLES,
                  rng: np.random.Generator | None = None) -> float:
    """1 / E ||score||^2 per scalar coordinate at level t, by Monte Carlo."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    sigma = schedule.sigma(t)
    u = wrap(sigma * rng.standard_normal(mc_samples) + 0.5) - 0.5
    mean_sq = float(np.mean(_score_residual(u, sigma) ** 2))
    return 1.0 / max(mean_sq, _LAMBDA_FLOOR)


@dataclass(frozen=True)
class LambdaWeights:
    """Cached per-step loss weights lambda_t (index k holds t = k+1)."""

    mc_samples: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ConfigError("lambda weights must be positive and finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def value(self, t: int) -> float:
        if not 1 <= t <= len(self.values):
            raise DomainError(f"t={t} outside [1, {len(self.values)}]")
        return float(self.values[t - 1])

    def to_json_dict(self) -> dict:
        return {"mc_samples": self.mc_samples, "values": self.values.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LambdaWeights":
        return cls(int(doc["mc_samples"]), np.asarray(doc["values"], dtype=float))


def estimate_lambda_weights(schedule: SigmaSchedule, mc_samples: int = DEFAULT_MC_SAMPLES,
                            rng: np.random.Generator | None = None) -> LambdaWeights:
    """Estimate lambda_t for every step of the schedule once and cache it."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    values = np.array(
        [lambda_weight(t, schedule, mc_samples, rng) for t in range(1, schedule.t_max + 1)]
    )
    return LambdaWeights(mc_samples, values)


def loss_F(score_target, eps_hat, lam: float) -> float:
    """Score-matching loss: lambda_t * ||target - estimate||_F^2."""
    score_target = np.asarray(score_target, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if score_target.shape != eps_hat.shape:
        raise ShapeError(
            f"score target shape {score_target.shape} != estimate shape {eps_hat.shape}"
        )
    return float(lam * np.sum((score_target - eps_hat) ** 2))


def save_schedule_json(path, sigma: SigmaSchedule, lam: LambdaWeights | None = None,
                       beta=None) -> None:
    """Serialize schedules (and the lambda cache) for reproducibility."""
    doc = {"sigma": sigma.to_json_dict()}
    if lam is not None:
        doc["lambda"] = lam.to_json_dict()
    if beta is not None:
        doc["beta"] = beta.to_json_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh)

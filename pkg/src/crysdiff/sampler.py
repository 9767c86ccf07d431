"""Structure generation: ancestral DDPM steps on the lattice interleaved with
predictor-corrector steps on the fractional coordinates.

The reverse pass starts from L_T ~ N(0, I) and F_T ~ U[0,1), walks t = T..1,
and rebuilds the hypergraph from the current geometry before every denoiser
call so the network always sees a graph consistent with its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coord_diffusion import SigmaSchedule
from .crystal import Crystal, wrap
from .denoiser import DenoiserParams, denoise
from .errors import ConfigError, DivergenceError
from .hypergraph import HypergraphConfig, build_hypergraph
from .lattice_diffusion import BetaSchedule, posterior_variance, reverse_mean
from .util import worker_count

# Langevin corrector step-size cap, as a fraction of sigma^2 at the level.
_DELTA_CAP = 0.25


@dataclass(frozen=True)
class SampleConfig:
    corrector_steps: int = 1
    snr: float = 0.16
    hypergraph: HypergraphConfig = field(default_factory=HypergraphConfig)

    def __post_init__(self):
        if self.corrector_steps < 0:
            raise ConfigError("corrector_steps must be >= 0")
        if self.snr <= 0:
            raise ConfigError("snr must be positive")


def predictor_step_F(frac, score_est, t: int, schedule: SigmaSchedule,
                     rng: np.random.Generator):
    """Reverse SDE discretization: step size sigma_t^2 - sigma_{t-1}^2.

    The injected noise is omitted on the final step (t = 1), which makes the
    last move a pure contraction toward the mode.
    """
    sigma_sq_step = schedule.sigma(t) ** 2 - schedule.sigma(t - 1) ** 2
    frac = np.asarray(frac, dtype=float)
    drift = sigma_sq_step * np.asarray(score_est, dtype=float)
    if t > 1:
        drift = drift + np.sqrt(sigma_sq_step) * rng.standard_normal(frac.shape)
    return wrap(frac + drift)


def corrector_step_F(frac, score_est, noise_scale: float, rng: np.random.Generator,
                     snr: float = 0.16):
    """One Langevin correction with the signal-to-noise step-size rule.

    delta = 2 (snr * ||z|| / ||score||)^2, capped at 0.25 * noise_scale^2.
    A zero score makes the step a no-op (the rule is undefined there).
    """
    if noise_scale <= 0:
        raise ConfigError("noise_scale must be positive")
    frac = np.asarray(frac, dtype=float)
    score = np.asarray(score_est, dtype=float)
    z = rng.standard_normal(frac.shape)
    score_norm = float(np.linalg.norm(score))
    if score_norm == 0.0:
        return wrap(frac)
    delta = 2.0 * (snr * float(np.linalg.norm(z)) / score_norm) ** 2
    delta = min(delta, _DELTA_CAP * noise_scale**2)
    return wrap(frac + delta * score + np.sqrt(2.0 * delta) * z)


def sample_structure(species, params: DenoiserParams, sigma_schedule: SigmaSchedule,
                     beta_schedule: BetaSchedule, config: SampleConfig,
                     rng: np.random.Generator, lattice_noise_transform=None,
                     trajectory_sink=None, mutation=None) -> Crystal:
    """Generate one crystal for a fixed composition.

    `lattice_noise_transform`, when given, is applied to every lattice noise
    draw (including the prior); it exists so the symmetry verifier can run
    paired trajectories with rotated noise streams.  `trajectory_sink` is
    called as sink(t, frac, lattice) after each outer step.  `mutation` is
    forwarded to the denoiser (verifier instrumentation only).
    """
    if sigma_schedule.t_max != beta_schedule.t_max:
        raise ConfigError("sigma and beta schedules disagree on T")
    species = np.asarray(species, dtype=int)
    n = species.size
    transform = lattice_noise_transform if lattice_noise_transform is not None else (lambda m: m)
    atom_types = np.zeros((params.config.num_species, n))
    atom_types[species, np.arange(n)] = 1.0

    lattice = transform(rng.standard_normal((3, 3)))
    frac = rng.uniform(0.0, 1.0, size=(3, n))
    for t in range(sigma_schedule.t_max, 0, -1):
        sigma_t = sigma_schedule.sigma(t)
        graph = build_hypergraph(frac, lattice, config.hypergraph)
        eps_l_hat, score = denoise(
            atom_types, frac, lattice, t, graph, params, sigma_t=sigma_t, mutation=mutation
        )
        mu = reverse_mean(lattice, eps_l_hat, t, beta_schedule)
        if t > 1:
            noise = transform(rng.standard_normal((3, 3)))
            lattice = mu + np.sqrt(posterior_variance(t, beta_schedule)) * noise
        else:
            lattice = mu
        frac = predictor_step_F(frac, score, t, sigma_schedule, rng)
        if t > 1:
            sigma_level = sigma_schedule.sigma(t - 1)
            for _ in range(config.corrector_steps):
                graph = build_hypergraph(frac, lattice, config.hypergraph)
                _, score = denoise(
                    atom_types, frac, lattice, t - 1, graph, params,
                    sigma_t=sigma_level, mutation=mutation,
                )
                frac = corrector_step_F(frac, score, sigma_level, rng, config.snr)
        if not (np.all(np.isfinite(lattice)) and np.all(np.isfinite(frac))):
            raise DivergenceError(t)
        if trajectory_sink is not None:
            trajectory_sink(t - 1, frac.copy(), lattice.copy())
    return Crystal.from_species(species, wrap(frac), lattice,
                                num_species=params.config.num_species)


def sample_many(compositions, params: DenoiserParams, sigma_schedule: SigmaSchedule,
                beta_schedule: BetaSchedule, config: SampleConfig, seed: int,
                samples_per_composition: int = 1, trajectory_sink_factory=None):
    """Sample k structures per composition with independent, reproducible streams.

    `compositions` is a list of (id, species array); returns a list of
    (id, Crystal) with ids suffixed '#j' for j = 0..k-1.  Trajectories run in
    parallel up to the CRYSDIFF_THREADS cap.
    """
    from concurrent.futures import ThreadPoolExecutor

    jobs = []
    seq = np.random.SeedSequence(seed)
    children = seq.spawn(len(compositions) * samples_per_composition)
    pos = 0
    for comp_id, species in compositions:
        for j in range(samples_per_composition):
            jobs.append((f"{comp_id}#{j}", species, children[pos]))
            pos += 1

    def run(job):
        job_id, species, child = job
        sink = trajectory_sink_factory(job_id) if trajectory_sink_factory else None
        crystal = sample_structure(
            species, params, sigma_schedule, beta_schedule, config,
            np.random.default_rng(child), trajectory_sink=sink,
        )
        return job_id, crystal

    workers = worker_count()
    if workers <= 1 or len(jobs) <= 1:
        return [run(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))

"""Joint training loop: noise lattice and coordinates, run the denoiser,
combine both losses, and take Adam steps.

Per step: draw lattice noise, coordinate noise, and a uniform step t; form
(L_t, F_t); rebuild the hypergraph from the *noised* geometry so the denoiser
sees the structure it is actually given; regress the lattice head on the
drawn noise and the coordinate head on the analytic wrapped-normal score.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .coord_diffusion import (
    DEFAULT_MC_SAMPLES,
    LambdaWeights,
    SigmaSchedule,
    estimate_lambda_weights,
    loss_F,
    save_schedule_json,
    wrapped_normal_score,
)
from .crystal import Crystal, wrap
from .denoiser import (
    DenoiserConfig,
    DenoiserParams,
    denoise_backward,
    denoise_with_tape,
    init_denoiser,
    params_from_dict,
    params_to_dict,
    save_checkpoint,
)
from .errors import ConfigError
from .hypergraph import HypergraphConfig, build_hypergraph
from .lattice_diffusion import BetaSchedule, loss_L, make_cosine_schedule
from .nn import adam_init, adam_step, add_scaled, zeros_like_params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 3e-3
    seed: int = 0
    t_diffusion: int = 1000
    max_steps: int | None = None
    loss_weight_lattice: float = 1.0
    loss_weight_coord: float = 1.0
    hypergraph: HypergraphConfig = field(default_factory=HypergraphConfig)
    hidden_dim: int = 128
    num_layers: int = 4
    fourier_k: int = 16
    time_embed_dim: int = 64
    atom_embed_dim: int = 64
    order_embed_dim: int = 16
    psi_mode: str = "directed"
    sigma_min: float = 0.005
    sigma_max: float = 0.5
    lambda_mc_samples: int = DEFAULT_MC_SAMPLES
    checkpoint_interval: int = 25

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.t_diffusion, self.checkpoint_interval) < 1:
            raise ConfigError("epochs, batch_size, t_diffusion, checkpoint_interval must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1 when set")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.loss_weight_lattice < 0 or self.loss_weight_coord < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.loss_weight_lattice + self.loss_weight_coord <= 0:
            raise ConfigError("at least one loss weight must be positive")

    def denoiser_config(self, num_species: int) -> DenoiserConfig:
        return DenoiserConfig(
            num_species=num_species,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            fourier_k=self.fourier_k,
            time_embed_dim=self.time_embed_dim,
            atom_embed_dim=self.atom_embed_dim,
            order_embed_dim=self.order_embed_dim,
            max_order=self.hypergraph.max_order,
            psi_mode=self.psi_mode,
        )


@dataclass
class Schedules:
    sigma: SigmaSchedule
    beta: BetaSchedule
    lam: LambdaWeights


def make_schedules(config: TrainConfig, lambda_rng=None) -> Schedules:
    sigma = SigmaSchedule.make(config.t_diffusion, config.sigma_min, config.sigma_max)
    beta = make_cosine_schedule(config.t_diffusion)
    lam = estimate_lambda_weights(sigma, config.lambda_mc_samples, lambda_rng)
    return Schedules(sigma, beta, lam)


@dataclass
class StepResult:
    loss_lattice: float
    loss_coord: float
    grads: dict

    @property
    def loss(self) -> float:
        return self.loss_lattice + self.loss_coord


def train_step(crystal: Crystal, params: DenoiserParams, schedules: Schedules,
               rng: np.random.Generator, config: TrainConfig) -> StepResult:
    """One noising/denoising/backward pass on a single crystal.

    Returns weighted per-part losses and exact parameter gradients of their sum.
    """
    eps_l = rng.standard_normal((3, 3))
    eps_f = rng.standard_normal((3, crystal.num_atoms))
    t = int(rng.integers(1, config.t_diffusion + 1))
    abar = schedules.beta.alpha_bar(t)
    lattice_t = np.sqrt(abar) * crystal.lattice + np.sqrt(1.0 - abar) * eps_l
    sigma_t = schedules.sigma.sigma(t)
    frac_t = wrap(crystal.frac_coords + sigma_t * eps_f)
    graph = build_hypergraph(frac_t, lattice_t, config.hypergraph)
    (eps_l_hat, eps_f_hat), tape = denoise_with_tape(
        crystal.atom_types, frac_t, lattice_t, t, graph, params, sigma_t=sigma_t
    )
    target = wrapped_normal_score(frac_t, crystal.frac_coords, sigma_t)
    lam = schedules.lam.value(t)
    w_l, w_f = config.loss_weight_lattice, config.loss_weight_coord
    part_l = w_l * loss_L(eps_l, eps_l_hat)
    part_f = w_f * loss_F(target, eps_f_hat, lam)
    d_eps_l = -2.0 * w_l * (eps_l - eps_l_hat)
    d_eps_f = -2.0 * w_f * lam * (target - eps_f_hat)
    grads = denoise_backward(tape, d_eps_l, d_eps_f)
    return StepResult(part_l, part_f, grads)


@dataclass
class TrainResult:
    params: DenoiserParams
    loss_rows: list  # (epoch, mean_loss_lattice, mean_loss_coord)
    steps: int
    schedules: Schedules


def _checkpoint_extra(config: TrainConfig) -> dict:
    from dataclasses import asdict

    return {
        "t_diffusion": config.t_diffusion,
        "sigma_min": config.sigma_min,
        "sigma_max": config.sigma_max,
        "hypergraph": asdict(config.hypergraph),
        "seed": config.seed,
    }


def train_loop(dataset, config: TrainConfig, ckpt_path=None, loss_csv_path=None,
               log=None) -> TrainResult:
    """Shuffled mini-batch training with Adam; deterministic under config.seed.

    Writes a checkpoint every `checkpoint_interval` epochs (and at the end)
    when `ckpt_path` is given, and a per-epoch loss CSV when `loss_csv_path`
    is given.
    """
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    lambda_rng = np.random.default_rng(seeds[1])
    train_rng = np.random.default_rng(seeds[2])

    schedules = make_schedules(config, lambda_rng)
    params = init_denoiser(config.denoiser_config(dataset.num_species), init_rng)
    flat = params_to_dict(params)
    adam_state = adam_init(flat)
    extra = _checkpoint_extra(config)

    crystals = list(dataset.crystals)
    loss_rows = []
    steps = 0
    done = False
    for epoch in range(1, config.epochs + 1):
        order = train_rng.permutation(len(crystals))
        sum_l = sum_f = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_sum = zeros_like_params(flat)
            for idx in batch:
                result = train_step(crystals[idx], params, schedules, train_rng, config)
                add_scaled(grad_sum, result.grads)
                sum_l += result.loss_lattice
                sum_f += result.loss_coord
            seen += len(batch)
            grads = {name: value / len(batch) for name, value in grad_sum.items()}
            flat, adam_state = adam_step(flat, grads, adam_state, config.learning_rate)
            params = params_from_dict(params.config, flat)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                done = True
                break
        loss_rows.append((epoch, sum_l / seen, sum_f / seen))
        if log is not None:
            log(f"epoch {epoch}: loss_L={sum_l / seen:.6f} loss_F={sum_f / seen:.6f}")
        if ckpt_path is not None and epoch % config.checkpoint_interval == 0:
            save_checkpoint(ckpt_path, params, extra)
        if done:
            break

    if ckpt_path is not None:
        save_checkpoint(ckpt_path, params, extra)
        save_schedule_json(
            str(ckpt_path) + ".schedules.json", schedules.sigma, schedules.lam, schedules.beta
        )
    if loss_csv_path is not None:
        with open(loss_csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss_L", "mean_loss_F"])
            writer.writerows(loss_rows)
    return TrainResult(params, loss_rows, steps, schedules)

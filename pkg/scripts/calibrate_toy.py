"""Calibration driver for the end-to-end toy run; not part of the package."""

import sys
import time

import numpy as np

import crysdiff as cd
from crysdiff.denoiser import init_denoiser, params_from_dict, params_to_dict
from crysdiff.evaluation import evaluate_datasets
from crysdiff.nn import adam_init, adam_step, add_scaled, zeros_like_params
from crysdiff.sampler import SampleConfig, sample_many
from crysdiff.trainer import TrainConfig, make_schedules, train_step


def run(hidden=128, layers=4, k=16, lr=3e-3, batch=16, steps=2000, t_diff=200,
        radius_scale=0.75, seed=0, milestones=(500, 1000, 1500, 2000), n_eval=20,
        corrector_steps=1, psi_mode="directed", single_class=0):
    rng = np.random.default_rng(123)
    data = cd.synth_perovskite(200, 0.02, rng)
    if single_class:
        from crysdiff.crystal import Crystal
        fixed = []
        for c in data.crystals:
            species = np.array([0, 1, 2, 2, 2])
            fixed.append(Crystal.from_species(species, c.frac_coords, c.lattice, num_species=3))
        data = cd.Dataset(fixed, data.ids, data.species_vocabulary)
    train, val, test = cd.split(data, (0.6, 0.2, 0.2), seed=7)
    hg = cd.HypergraphConfig(mode="sphere", radius_scale=radius_scale, pairwise_augment=True)
    config = TrainConfig(
        epochs=10_000, batch_size=batch, learning_rate=lr, seed=seed, t_diffusion=t_diff,
        max_steps=steps, hypergraph=hg, hidden_dim=hidden, num_layers=layers, fourier_k=k,
        lambda_mc_samples=50_000, psi_mode=psi_mode,
    )
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    schedules = make_schedules(config, np.random.default_rng(seeds[1]))
    params = init_denoiser(config.denoiser_config(3), np.random.default_rng(seeds[0]))
    train_rng = np.random.default_rng(seeds[2])
    flat = params_to_dict(params)
    adam = adam_init(flat)
    crystals = list(train.crystals)
    step = 0
    t0 = time.time()
    recent_l, recent_f = [], []
    while step < steps:
        order = train_rng.permutation(len(crystals))
        for start in range(0, len(order), batch):
            chunk = order[start:start + batch]
            gsum = zeros_like_params(flat)
            bl = bf = 0.0
            for idx in chunk:
                res = train_step(crystals[idx], params, schedules, train_rng, config)
                add_scaled(gsum, res.grads)
                bl += res.loss_lattice; bf += res.loss_coord
            grads = {n: v / len(chunk) for n, v in gsum.items()}
            flat, adam = adam_step(flat, grads, adam, lr)
            params = params_from_dict(params.config, flat)
            step += 1
            recent_l.append(bl / len(chunk)); recent_f.append(bf / len(chunk))
            if step % 100 == 0:
                print(f"step {step}: loss_L={np.mean(recent_l[-100:]):.4f} "
                      f"loss_F={np.mean(recent_f[-100:]):.4f} ({time.time()-t0:.0f}s)", flush=True)
            if step in milestones:
                sub = test.subset(range(n_eval))
                sc = SampleConfig(hypergraph=hg, corrector_steps=corrector_steps)
                t1 = time.time()
                sampled = sample_many(sub.compositions(), params, schedules.sigma,
                                      schedules.beta, sc, seed=999)
                pred = cd.Dataset([c for _, c in sampled], [i for i, _ in sampled],
                                  list(sub.species_vocabulary))
                rows, summary = evaluate_datasets(pred, sub)
                print(f"  milestone {step}: match_rate={summary['match_rate']:.1f} "
                      f"mean_rmse={summary['mean_rmse_matched']} "
                      f"(eval {time.time()-t1:.0f}s)", flush=True)
            if step >= steps:
                break
    return params, schedules


if __name__ == "__main__":
    kwargs = {}
    for arg in sys.argv[1:]:
        key, value = arg.split("=")
        try:
            kwargs[key] = int(value)
        except ValueError:
            try:
                kwargs[key] = float(value)
            except ValueError:
                kwargs[key] = value
    run(**kwargs)

"""Pipeline operations shared by the HTTP app and the CLI thin client.

Each function maps a request model to a response model, reading and writing
files on the host filesystem; domain failures raise CrysDiffError subclasses
(the HTTP layer translates them to 4xx responses).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .. import __version__
from ..coord_diffusion import SigmaSchedule
from ..dataset import Dataset, load_jsonl, save_jsonl, synth_perovskite
from ..denoiser import DenoiserConfig, init_denoiser, load_checkpoint
from ..errors import ConfigError
from ..evaluation import evaluate_datasets
from ..hypergraph import HypergraphConfig, build_hypergraph
from ..lattice_diffusion import make_cosine_schedule
from ..sampler import SampleConfig, sample_many
from ..symmetry import run_symmetry_suite
from ..trainer import TrainConfig, train_loop
from . import schemas


def _hypergraph_config(options: schemas.HypergraphOptions) -> HypergraphConfig:
    return HypergraphConfig(
        mode=options.mode,
        radius=options.radius,
        radius_scale=options.radius_scale,
        side=options.side,
        side_scale=options.side_scale,
        max_order=options.max_order,
        pairwise_augment=options.pairwise_augment,
    )


def synth_data(req: schemas.SynthDataRequest) -> schemas.SynthDataResponse:
    dataset = synth_perovskite(req.count, req.jitter_sigma, np.random.default_rng(req.seed))
    save_jsonl(dataset, req.out_path)
    return schemas.SynthDataResponse(path=str(req.out_path), count=len(dataset))


def build_hypergraphs(req: schemas.BuildHypergraphRequest) -> schemas.BuildHypergraphResponse:
    dataset = load_jsonl(req.in_path)
    config = _hypergraph_config(req.hypergraph)
    total = 0
    with open(req.out_path, "w") as fh:
        for record_id, crystal in zip(dataset.ids, dataset.crystals):
            graph = build_hypergraph(crystal.frac_coords, crystal.lattice, config)
            doc = {"id": record_id, **graph.to_json_dict()}
            total += graph.num_hyperedges
            fh.write(json.dumps(doc) + "\n")
    return schemas.BuildHypergraphResponse(
        path=str(req.out_path), num_graphs=len(dataset), total_hyperedges=total
    )


def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    dataset = load_jsonl(req.data_path)
    config = TrainConfig(
        epochs=req.epochs,
        batch_size=req.batch_size,
        learning_rate=req.learning_rate,
        seed=req.seed,
        t_diffusion=req.t_diffusion,
        max_steps=req.max_steps,
        loss_weight_lattice=req.loss_weight_lattice,
        loss_weight_coord=req.loss_weight_coord,
        hypergraph=_hypergraph_config(req.hypergraph),
        hidden_dim=req.hidden_dim,
        num_layers=req.num_layers,
        fourier_k=req.fourier_k,
        time_embed_dim=req.time_embed_dim,
        atom_embed_dim=req.atom_embed_dim,
        order_embed_dim=req.order_embed_dim,
        psi_mode=req.psi_mode,
        sigma_min=req.sigma_min,
        sigma_max=req.sigma_max,
        lambda_mc_samples=req.lambda_mc_samples,
        checkpoint_interval=req.checkpoint_interval,
    )
    result = train_loop(dataset, config, ckpt_path=req.out_ckpt, loss_csv_path=req.loss_csv)
    first, last = result.loss_rows[0], result.loss_rows[-1]
    return schemas.TrainResponse(
        ckpt_path=str(req.out_ckpt),
        loss_csv=req.loss_csv,
        epochs_run=len(result.loss_rows),
        steps_run=result.steps,
        first_loss_lattice=first[1],
        first_loss_coord=first[2],
        final_loss_lattice=last[1],
        final_loss_coord=last[2],
    )


def _schedules_from_extra(extra: dict):
    try:
        t_max = int(extra["t_diffusion"])
        sigma = SigmaSchedule.make(t_max, float(extra["sigma_min"]), float(extra["sigma_max"]))
        hypergraph = HypergraphConfig(**extra["hypergraph"])
    except KeyError as exc:
        raise ConfigError(f"checkpoint lacks sampling metadata: {exc}") from exc
    return sigma, make_cosine_schedule(t_max), hypergraph


def sample(req: schemas.SampleRequest) -> schemas.SampleResponse:
    params, extra = load_checkpoint(req.ckpt_path)
    sigma, beta, hypergraph = _schedules_from_extra(extra)
    source = load_jsonl(req.composition_from)
    config = SampleConfig(
        corrector_steps=req.corrector_steps, snr=req.snr, hypergraph=hypergraph
    )
    sink_factory = None
    trajectory_rows = []
    if req.trajectory_out:
        def sink_factory(job_id):
            def sink(t, frac, lattice):
                trajectory_rows.append(
                    {
                        "id": job_id,
                        "t": int(t),
                        "frac_coords": frac.T.tolist(),
                        "lattice": lattice.T.tolist(),
                    }
                )
            return sink

    sampled = sample_many(
        source.compositions(), params, sigma, beta, config, req.seed,
        samples_per_composition=req.num_samples, trajectory_sink_factory=sink_factory,
    )
    out = Dataset(
        [crystal for _, crystal in sampled],
        [job_id for job_id, _ in sampled],
        list(source.species_vocabulary),
    )
    save_jsonl(out, req.out_path)
    if req.trajectory_out:
        with open(req.trajectory_out, "w") as fh:
            for row in trajectory_rows:
                fh.write(json.dumps(row) + "\n")
    return schemas.SampleResponse(path=str(req.out_path), num_structures=len(out))


def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    pred = load_jsonl(req.pred_path)
    truth = load_jsonl(req.truth_path)
    rows, summary = evaluate_datasets(
        pred, truth, stol=req.stol, angle_tol_deg=req.angle_tol, ltol=req.ltol
    )
    if req.out_csv:
        with open(req.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["structure_id", "matched", "rmse"])
            for record_id, matched, rmse in rows:
                writer.writerow([record_id, matched, "" if rmse is None else rmse])
    if req.summary_json:
        with open(req.summary_json, "w") as fh:
            json.dump(summary, fh, indent=2)
    return schemas.EvaluateResponse(
        num_structures=summary["num_structures"],
        match_rate=summary["match_rate"],
        mean_rmse_matched=summary["mean_rmse_matched"],
        stol=req.stol,
        angle_tol=req.angle_tol,
        ltol=req.ltol,
        out_csv=req.out_csv,
        summary_json=req.summary_json,
    )


def verify_symmetry(req: schemas.VerifySymmetryRequest) -> schemas.VerifySymmetryResponse:
    if req.ckpt_path:
        params, _ = load_checkpoint(req.ckpt_path)
    else:
        params = init_denoiser(DenoiserConfig(num_species=3), req.seed)
    report = run_symmetry_suite(
        params,
        seed=req.seed,
        trials=req.trials,
        include_mutations=req.include_mutations,
        pushforward_steps=req.pushforward_steps,
    )
    if req.out_json:
        with open(req.out_json, "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
    return schemas.VerifySymmetryResponse(
        all_passed=report.all_passed,
        checks=[schemas.CheckResultModel(**c.to_json_dict()) for c in report.checks],
        table=report.format_table(),
        out_json=req.out_json,
    )


def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)

"""Command-line client for the pipeline.

The CLI is a thin layer over the service operations: every subcommand builds
a request model and either calls the operation in process (default) or POSTs
it to a running service when --server is given.  Exit codes: 0 success, 1
runtime or check failure, 2 usage error.

A --config JSON file supplies defaults (global keys plus per-subcommand
sections); explicit command-line flags override it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from pydantic import ValidationError

from . import __version__
from .errors import CrysDiffError
from .service import operations, schemas

_ENDPOINTS = {
    "synth-data": ("/synth-data", schemas.SynthDataRequest, schemas.SynthDataResponse,
                   operations.synth_data),
    "build-hypergraph": ("/build-hypergraph", schemas.BuildHypergraphRequest,
                         schemas.BuildHypergraphResponse, operations.build_hypergraphs),
    "train": ("/train", schemas.TrainRequest, schemas.TrainResponse, operations.train),
    "sample": ("/sample", schemas.SampleRequest, schemas.SampleResponse, operations.sample),
    "evaluate": ("/evaluate", schemas.EvaluateRequest, schemas.EvaluateResponse,
                 operations.evaluate),
    "verify-symmetry": ("/verify-symmetry", schemas.VerifySymmetryRequest,
                        schemas.VerifySymmetryResponse, operations.verify_symmetry),
}

_OUTPUT_FIELDS = (
    "out_path", "out_ckpt", "loss_csv", "out_csv", "summary_json",
    "trajectory_out", "out_json",
)

_HYPERGRAPH_FIELDS = (
    "mode", "radius", "radius_scale", "side", "side_scale", "max_order", "pairwise_augment",
)


def _add_hypergraph_flags(sub):
    sub.add_argument("--mode", choices=["sphere", "cube", "pairwise"], dest="mode")
    sub.add_argument("--radius", type=float, dest="radius")
    sub.add_argument("--radius-scale", type=float, dest="radius_scale")
    sub.add_argument("--side", type=float, dest="side")
    sub.add_argument("--side-scale", type=float, dest="side_scale")
    sub.add_argument("--max-order", type=int, dest="max_order")
    sub.add_argument("--pairwise-augment", action=argparse.BooleanOptionalAction,
                     default=None, dest="pairwise_augment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crysdiff",
        description="Crystal diffusion pipeline: synthesize data, build hypergraphs, "
        "train, sample, evaluate, and verify symmetry claims.",
    )
    parser.add_argument("--version", action="version", version=f"crysdiff {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--config", default=None, help="JSON file with default flag values")
    parser.add_argument("--out-dir", default=None, help="directory for relative output paths")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; requests go over HTTP")
    commands = parser.add_subparsers(dest="command")

    sub = commands.add_parser("synth-data", help="generate synthetic perovskite cells")
    sub.add_argument("--count", type=int, dest="count")
    sub.add_argument("--jitter", type=float, dest="jitter_sigma")
    sub.add_argument("--out", dest="out_path")

    sub = commands.add_parser("build-hypergraph", help="build hypergraphs for a dataset")
    sub.add_argument("--in", dest="in_path")
    sub.add_argument("--out", dest="out_path")
    _add_hypergraph_flags(sub)

    sub = commands.add_parser("train", help="train the denoiser")
    sub.add_argument("--data", dest="data_path")
    sub.add_argument("--epochs", type=int, dest="epochs")
    sub.add_argument("--batch", type=int, dest="batch_size")
    sub.add_argument("--lr", type=float, dest="learning_rate")
    sub.add_argument("--T", type=int, dest="t_diffusion")
    sub.add_argument("--max-steps", type=int, dest="max_steps")
    sub.add_argument("--out-ckpt", dest="out_ckpt")
    sub.add_argument("--loss-csv", dest="loss_csv")
    sub.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    sub.add_argument("--num-layers", type=int, dest="num_layers")
    sub.add_argument("--fourier-k", type=int, dest="fourier_k")
    sub.add_argument("--time-embed-dim", type=int, dest="time_embed_dim")
    sub.add_argument("--atom-embed-dim", type=int, dest="atom_embed_dim")
    sub.add_argument("--order-embed-dim", type=int, dest="order_embed_dim")
    sub.add_argument("--psi-mode", choices=["directed", "symmetric", "literal"], dest="psi_mode")
    sub.add_argument("--sigma-min", type=float, dest="sigma_min")
    sub.add_argument("--sigma-max", type=float, dest="sigma_max")
    sub.add_argument("--lambda-mc", type=int, dest="lambda_mc_samples")
    sub.add_argument("--ckpt-interval", type=int, dest="checkpoint_interval")
    sub.add_argument("--w-lattice", type=float, dest="loss_weight_lattice")
    sub.add_argument("--w-coord", type=float, dest="loss_weight_coord")
    _add_hypergraph_flags(sub)

    sub = commands.add_parser("sample", help="sample structures from a checkpoint")
    sub.add_argument("--ckpt", dest="ckpt_path")
    sub.add_argument("--composition-from", dest="composition_from")
    sub.add_argument("--num-samples", type=int, dest="num_samples")
    sub.add_argument("--out", dest="out_path")
    sub.add_argument("--corrector-steps", type=int, dest="corrector_steps")
    sub.add_argument("--snr", type=float, dest="snr")
    sub.add_argument("--trajectory-out", dest="trajectory_out")

    sub = commands.add_parser("evaluate", help="match predictions against ground truth")
    sub.add_argument("--pred", dest="pred_path")
    sub.add_argument("--truth", dest="truth_path")
    sub.add_argument("--stol", type=float, dest="stol")
    sub.add_argument("--angle-tol", type=float, dest="angle_tol")
    sub.add_argument("--ltol", type=float, dest="ltol")
    sub.add_argument("--out", dest="out_csv")
    sub.add_argument("--summary-json", dest="summary_json")

    sub = commands.add_parser("verify-symmetry", help="run the symmetry check suite")
    sub.add_argument("--ckpt", dest="ckpt_path")
    sub.add_argument("--random-init", action="store_true",
                     help="check a freshly initialized network (default when no --ckpt)")
    sub.add_argument("--trials", type=int, dest="trials")
    sub.add_argument("--pushforward-steps", type=int, dest="pushforward_steps")
    sub.add_argument("--mutations", action=argparse.BooleanOptionalAction,
                     default=None, dest="include_mutations")
    sub.add_argument("--out-json", dest="out_json")

    sub = commands.add_parser("serve", help="run the HTTP service")
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--port", type=int, default=8000)

    return parser


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise CrysDiffError(f"{path}: config file must hold a JSON object")
    return doc


def _merge_request(parser, command, args, config):
    """defaults < config file (global, then section) < explicit flags."""
    _, request_cls, _, _ = _ENDPOINTS[command]
    section = config.get(command, config.get(command.replace("-", "_"), {}))
    merged = {}
    if "seed" in config and "seed" in request_cls.model_fields:
        merged["seed"] = config["seed"]
    if isinstance(section, dict):
        merged.update(section)
    cli_values = {
        key: value
        for key, value in vars(args).items()
        if value is not None and key in request_cls.model_fields
    }
    hyper_values = {
        key: value
        for key, value in vars(args).items()
        if value is not None and key in _HYPERGRAPH_FIELDS
    }
    if hyper_values and "hypergraph" in request_cls.model_fields:
        base = dict(merged.get("hypergraph", {}))
        base.update(hyper_values)
        merged["hypergraph"] = base
    merged.update(cli_values)
    if args.seed is not None and "seed" in request_cls.model_fields:
        merged["seed"] = args.seed
    if command == "evaluate" and merged.get("out_csv") and not merged.get("summary_json"):
        merged["summary_json"] = str(merged["out_csv"]) + ".summary.json"
    if args.out_dir:
        for field in _OUTPUT_FIELDS:
            value = merged.get(field)
            if value and not os.path.isabs(str(value)):
                merged[field] = os.path.join(args.out_dir, str(value))
    try:
        return request_cls(**merged)
    except ValidationError as exc:
        parser.error(f"{command}: {exc.errors()[0]['loc']}: {exc.errors()[0]['msg']}")


def _call_server(server, command, request):
    import httpx

    path, _, response_cls, _ = _ENDPOINTS[command]
    reply = httpx.post(server.rstrip("/") + path, json=request.model_dump(), timeout=None)
    if reply.status_code >= 400:
        try:
            detail = reply.json().get("detail", reply.text)
        except ValueError:
            detail = reply.text
        raise CrysDiffError(f"server returned {reply.status_code}: {detail}")
    return response_cls(**reply.json())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        config = _load_config(args.config)
        request = _merge_request(parser, args.command, args, config)
        if args.server:
            response = _call_server(args.server, args.command, request)
        else:
            _, _, _, operation = _ENDPOINTS[args.command]
            response = operation(request)
    except (CrysDiffError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(response.model_dump_json(indent=2))
    if isinstance(response, schemas.VerifySymmetryResponse):
        print(response.table, file=sys.stderr)
        return 0 if response.all_passed else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""crysdiff: joint diffusion on lattices and fractional coordinates with a
hypergraph denoiser, plus structure matching and symmetry verification."""

__version__ = "0.1.0"

from .crystal import Crystal, cart_to_frac, frac_to_cart, lattice_volume, min_image_distance, periodic_diff, periodic_images, wrap
from .dataset import Dataset, load_jsonl, save_jsonl, split, synth_perovskite
from .denoiser import DenoiserConfig, DenoiserParams, denoise, init_denoiser, load_checkpoint, save_checkpoint
from .evaluation import MatchReport, evaluate_datasets, match_rate, match_structures, rank_score
from .hypergraph import Hypergraph, HypergraphConfig, augment_pairwise, build_cube_hyperedges, build_hypergraph, build_sphere_hyperedges, node_degrees
from .sampler import SampleConfig, sample_many, sample_structure
from .symmetry import SymmetryReport, run_symmetry_suite
from .trainer import TrainConfig, train_loop, train_step

__all__ = [
    "__version__",
    "Crystal", "wrap", "frac_to_cart", "cart_to_frac", "periodic_diff",
    "min_image_distance", "periodic_images", "lattice_volume",
    "Hypergraph", "HypergraphConfig", "build_sphere_hyperedges",
    "build_cube_hyperedges", "build_hypergraph", "augment_pairwise", "node_degrees",
    "DenoiserConfig", "DenoiserParams", "init_denoiser", "denoise",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "train_step", "train_loop",
    "SampleConfig", "sample_structure", "sample_many",
    "MatchReport", "match_structures", "match_rate", "rank_score", "evaluate_datasets",
    "SymmetryReport", "run_symmetry_suite",
    "Dataset", "load_jsonl", "save_jsonl", "synth_perovskite", "split",
]

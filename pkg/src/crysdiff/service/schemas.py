"""Pydantic request/response models for the pipeline endpoints."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HypergraphOptions(BaseModel):
    mode: Literal["sphere", "cube", "pairwise"] = "sphere"
    radius: Optional[float] = Field(default=None, gt=0)
    radius_scale: float = Field(default=0.55, gt=0)
    side: Optional[float] = Field(default=None, gt=0)
    side_scale: float = Field(default=1.1, gt=0)
    max_order: int = Field(default=6, ge=2)
    pairwise_augment: bool = False


class SynthDataRequest(BaseModel):
    count: int = Field(gt=0)
    jitter_sigma: float = Field(default=0.02, ge=0)
    seed: int = 0
    out_path: str


class SynthDataResponse(BaseModel):
    path: str
    count: int


class BuildHypergraphRequest(BaseModel):
    in_path: str
    hypergraph: HypergraphOptions = HypergraphOptions()
    out_path: str


class BuildHypergraphResponse(BaseModel):
    path: str
    num_graphs: int
    total_hyperedges: int


class TrainRequest(BaseModel):
    data_path: str
    out_ckpt: str
    loss_csv: Optional[str] = None
    epochs: int = Field(default=100, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=3e-3, gt=0)
    seed: int = 0
    t_diffusion: int = Field(default=1000, ge=2)
    max_steps: Optional[int] = Field(default=None, ge=1)
    loss_weight_lattice: float = Field(default=1.0, ge=0)
    loss_weight_coord: float = Field(default=1.0, ge=0)
    hypergraph: HypergraphOptions = HypergraphOptions()
    hidden_dim: int = Field(default=128, ge=1)
    num_layers: int = Field(default=4, ge=1)
    fourier_k: int = Field(default=16, ge=1)
    time_embed_dim: int = Field(default=64, ge=2)
    atom_embed_dim: int = Field(default=64, ge=1)
    order_embed_dim: int = Field(default=16, ge=1)
    psi_mode: Literal["directed", "symmetric", "literal"] = "directed"
    sigma_min: float = Field(default=0.005, gt=0)
    sigma_max: float = Field(default=0.5, gt=0)
    lambda_mc_samples: int = Field(default=100_000, ge=100)
    checkpoint_interval: int = Field(default=25, ge=1)


class TrainResponse(BaseModel):
    ckpt_path: str
    loss_csv: Optional[str]
    epochs_run: int
    steps_run: int
    first_loss_lattice: float
    first_loss_coord: float
    final_loss_lattice: float
    final_loss_coord: float


class SampleRequest(BaseModel):
    ckpt_path: str
    composition_from: str
    out_path: str
    num_samples: int = Field(default=1, ge=1)
    seed: int = 0
    corrector_steps: int = Field(default=1, ge=0)
    snr: float = Field(default=0.16, gt=0)
    trajectory_out: Optional[str] = None


class SampleResponse(BaseModel):
    path: str
    num_structures: int


class EvaluateRequest(BaseModel):
    pred_path: str
    truth_path: str
    stol: float = Field(default=0.5, gt=0)
    angle_tol: float = Field(default=10.0, gt=0)
    ltol: float = Field(default=0.3, gt=0)
    out_csv: Optional[str] = None
    summary_json: Optional[str] = None


class EvaluateResponse(BaseModel):
    num_structures: int
    match_rate: float
    mean_rmse_matched: Optional[float]
    stol: float
    angle_tol: float
    ltol: float
    out_csv: Optional[str]
    summary_json: Optional[str]


class CheckResultModel(BaseModel):
    name: str
    trials: int
    max_deviation: float
    tolerance: float
    passed: bool
    kind: str


class VerifySymmetryRequest(BaseModel):
    ckpt_path: Optional[str] = None  # None -> randomly initialized network
    trials: int = Field(default=20, ge=1)
    seed: int = 0
    include_mutations: bool = True
    pushforward_steps: int = Field(default=50, ge=2)
    out_json: Optional[str] = None


class VerifySymmetryResponse(BaseModel):
    all_passed: bool
    checks: list[CheckResultModel]
    table: str
    out_json: Optional[str]


class HealthResponse(BaseModel):
    status: str
    version: str

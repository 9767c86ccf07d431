"""FastAPI application exposing the pipeline over HTTP.

Run with: uvicorn crysdiff.service.app:app
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..errors import CrysDiffError
from . import operations, schemas

app = FastAPI(
    title="crysdiff",
    description="Crystal structure generation pipeline: synthetic data, "
    "hypergraph construction, training, sampling, evaluation, and symmetry checks.",
)


def _run(fn, req):
    try:
        return fn(req)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except CrysDiffError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return operations.health()


@app.post("/synth-data", response_model=schemas.SynthDataResponse)
def synth_data(req: schemas.SynthDataRequest):
    return _run(operations.synth_data, req)


@app.post("/build-hypergraph", response_model=schemas.BuildHypergraphResponse)
def build_hypergraph(req: schemas.BuildHypergraphRequest):
    return _run(operations.build_hypergraphs, req)


@app.post("/train", response_model=schemas.TrainResponse)
def train(req: schemas.TrainRequest):
    return _run(operations.train, req)


@app.post("/sample", response_model=schemas.SampleResponse)
def sample(req: schemas.SampleRequest):
    return _run(operations.sample, req)


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate(req: schemas.EvaluateRequest):
    return _run(operations.evaluate, req)


@app.post("/verify-symmetry", response_model=schemas.VerifySymmetryResponse)
def verify_symmetry(req: schemas.VerifySymmetryRequest):
    return _run(operations.verify_symmetry, req)

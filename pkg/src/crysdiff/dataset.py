"""Dataset ingestion, synthetic data generation, and deterministic splits.

The on-disk format is JSONL, one crystal per line:

    {"id": str, "species": [int, ...], "frac_coords": [[f, f, f], ...],
     "lattice": [[...], [...], [...]]}

File lattice rows are basis vectors; in memory the basis vectors are matrix
columns, so loading transposes.  Fractional coordinates outside [0, 1) are
wrapped on load with a warning; any other invariant violation rejects the
record.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .crystal import Crystal, wrap
from .errors import ConfigError, DatasetParseError, InvalidRecordError

# Ideal ABX3 sites: corner, body centre, three face centres.
_PEROVSKITE_SITES = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.5],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
    ]
).T  # (3, 5)

_SYNTH_VOCABULARY = ("S1", "S2", "S3")


@dataclass
class Dataset:
    crystals: list
    ids: list
    species_vocabulary: list

    def __post_init__(self):
        if len(self.crystals) != len(self.ids):
            raise ConfigError("crystals and ids must have the same length")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("dataset ids must be unique")
        for record_id, crystal in zip(self.ids, self.crystals):
            if crystal.num_species != len(self.species_vocabulary):
                raise InvalidRecordError(
                    record_id,
                    f"species channels {crystal.num_species} != vocabulary size "
                    f"{len(self.species_vocabulary)}",
                )

    def __len__(self) -> int:
        return len(self.crystals)

    @property
    def num_species(self) -> int:
        return len(self.species_vocabulary)

    def subset(self, indices) -> "Dataset":
        return Dataset(
            [self.crystals[i] for i in indices],
            [self.ids[i] for i in indices],
            list(self.species_vocabulary),
        )

    def compositions(self):
        """(id, species index array) pairs, the sampler's input."""
        return [(rid, crystal.species) for rid, crystal in zip(self.ids, self.crystals)]


def _crystal_from_record(record: dict, line_number: int, num_species: int) -> tuple:
    for key in ("id", "species", "frac_coords", "lattice"):
        if key not in record:
            raise DatasetParseError(line_number, f"missing field {key!r}")
    record_id = str(record["id"])
    species = np.asarray(record["species"], dtype=int)
    frac = np.asarray(record["frac_coords"], dtype=float)
    lattice = np.asarray(record["lattice"], dtype=float)
    if frac.ndim != 2 or frac.shape[1] != 3 or frac.shape[0] != species.size:
        raise InvalidRecordError(record_id, "frac_coords must be one [f,f,f] row per atom")
    if lattice.shape != (3, 3):
        raise InvalidRecordError(record_id, "lattice must be three 3-vector rows")
    if not np.all(np.isfinite(frac)):
        raise InvalidRecordError(record_id, "non-finite fractional coordinates")
    frac = frac.T  # (3, N)
    if np.any(frac < 0.0) or np.any(frac >= 1.0):
        warnings.warn(
            f"record {record_id!r}: fractional coordinates outside [0, 1) wrapped on load",
            stacklevel=3,
        )
        frac = wrap(frac)
    try:
        crystal = Crystal.from_species(species, frac, lattice.T, num_species=num_species)
    except ValueError as exc:
        raise InvalidRecordError(record_id, str(exc)) from exc
    return record_id, crystal


def load_jsonl(path, num_species: int | None = None,
               species_vocabulary=None) -> Dataset:
    """Load a dataset; the vocabulary defaults to generic names sized by the data."""
    records = []
    with open(path) as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(line_number, f"invalid JSON ({exc.msg})") from exc
            records.append((line_number, doc))
    if num_species is None:
        if species_vocabulary is not None:
            num_species = len(species_vocabulary)
        else:
            widest = 0
            for _, doc in records:
                if isinstance(doc, dict) and doc.get("species"):
                    widest = max(widest, max(int(s) for s in doc["species"]) + 1)
            num_species = max(widest, 1)
    ids, crystals = [], []
    for line_number, doc in records:
        if not isinstance(doc, dict):
            raise DatasetParseError(line_number, "line is not a JSON object")
        record_id, crystal = _crystal_from_record(doc, line_number, num_species)
        ids.append(record_id)
        crystals.append(crystal)
    vocabulary = list(species_vocabulary) if species_vocabulary is not None else [
        f"S{k}" for k in range(num_species)
    ]
    return Dataset(crystals, ids, vocabulary)


def save_jsonl(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        for record_id, crystal in zip(dataset.ids, dataset.crystals):
            doc = {
                "id": record_id,
                "species": crystal.species.tolist(),
                "frac_coords": crystal.frac_coords.T.tolist(),
                "lattice": crystal.lattice.T.tolist(),
            }
            fh.write(json.dumps(doc) + "\n")


def synth_perovskite(count: int, jitter_sigma: float, rng) -> Dataset:
    """Synthetic ABX3 cells: cubic lattice with edge ~ U[3.8, 4.2], ideal sites
    plus wrapped Gaussian jitter, species roles drawn as a cyclic shift of a
    3-species vocabulary (the tripled species identifies the shift, so every
    composition determines its structure unambiguously).
    """
    if jitter_sigma < 0:
        raise ConfigError("jitter_sigma must be >= 0")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    crystals, ids = [], []
    for index in range(count):
        edge = rng.uniform(3.8, 4.2)
        shift = int(rng.integers(0, 3))
        species = np.array([shift, (shift + 1) % 3, (shift + 2) % 3,
                            (shift + 2) % 3, (shift + 2) % 3])
        frac = _PEROVSKITE_SITES.copy()
        if jitter_sigma > 0:
            frac = frac + jitter_sigma * rng.standard_normal(frac.shape)
        crystals.append(
            Crystal.from_species(species, wrap(frac), edge * np.eye(3), num_species=3)
        )
        ids.append(f"perov-{index:05d}")
    return Dataset(crystals, ids, list(_SYNTH_VOCABULARY))


def split(dataset: Dataset, fractions, seed: int):
    """Deterministic shuffle then contiguous slices; returns (train, val, test)."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigError("fractions must be three non-negative numbers")
    if sum(fractions) > 1.0 + 1e-9:
        raise ConfigError("fractions must sum to at most 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n = len(dataset)
    bounds = np.round(np.cumsum(fractions) * n).astype(int)
    parts = (
        order[: bounds[0]],
        order[bounds[0] : bounds[1]],
        order[bounds[1] : bounds[2]],
    )
    return tuple(dataset.subset(list(part)) for part in parts)

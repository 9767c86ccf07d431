"""Structure matching and metrics.

A simplified reimplementation of the usual crystal structure matcher: a
lattice-parameter gate (relative length tolerance and absolute angle
tolerance after sorting axes by length) followed by a site gate that
minimizes the RMS minimum-image Cartesian displacement over candidate
periodic translations and species-respecting assignments.  No Niggli
reduction, supercell search, or species substitution; predictions whose true
match requires those will not be found.

Displacements are measured in the truth lattice on fractional coordinates, so
the match decision is exactly invariant under orthogonal transformations of
the predicted lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .crystal import Crystal, lattice_volume, wrap, _MIC_OFFSETS
from .errors import ConfigError, DomainError
from .util import worker_count

# Paper-default matcher thresholds.
DEFAULT_STOL = 0.5
DEFAULT_ANGLE_TOL_DEG = 10.0
DEFAULT_LTOL = 0.3

# Exact assignment up to this many atoms; greedy above.
_EXACT_ASSIGNMENT_LIMIT = 16
_BIG = 1e30


@dataclass(frozen=True)
class MatchReport:
    matched: bool
    rmse: float | None
    stol: float
    angle_tol_deg: float
    ltol: float

    def __post_init__(self):
        if self.matched != (self.rmse is not None):
            raise DomainError("rmse must be present exactly when matched")


def lattice_parameters(lattice) -> tuple:
    """(lengths, angles_deg) with axes sorted by length; angle i is between
    the other two sorted axes."""
    lattice = np.asarray(lattice, dtype=float)
    lengths = np.linalg.norm(lattice, axis=0)
    cosines = np.empty(3)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        cosines[i] = lattice[:, j] @ lattice[:, k] / (lengths[j] * lengths[k])
    angles = np.degrees(np.arccos(np.clip(cosines, -1.0, 1.0)))
    order = np.argsort(lengths, kind="stable")
    return lengths[order], angles[order]


def _lattice_gate(pred_lattice, truth_lattice, ltol: float, angle_tol_deg: float) -> bool:
    pred_len, pred_ang = lattice_parameters(pred_lattice)
    true_len, true_ang = lattice_parameters(truth_lattice)
    if np.any(np.abs(pred_len - true_len) > ltol * true_len):
        return False
    return not np.any(np.abs(pred_ang - true_ang) > angle_tol_deg)


def _min_image_sq_matrix(lattice, frac_a, frac_b) -> np.ndarray:
    """Squared minimum-image Cartesian distances; rows over frac_a, cols over frac_b."""
    diff = frac_b.T[None, :, :] - frac_a.T[:, None, :]
    cart = (diff[:, :, None, :] + _MIC_OFFSETS[None, None, :, :]) @ np.asarray(lattice).T
    return np.min(np.sum(cart**2, axis=-1), axis=-1)


def _assignment_cost(cost: np.ndarray) -> float:
    """Species-feasible total squared displacement; exact or greedy by size."""
    n = cost.shape[0]
    if n <= _EXACT_ASSIGNMENT_LIMIT:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum())
    remaining_rows = set(range(n))
    remaining_cols = set(range(n))
    total = 0.0
    order = np.dstack(np.unravel_index(np.argsort(cost, axis=None), cost.shape))[0]
    for i, j in order:
        if i in remaining_rows and j in remaining_cols:
            total += float(cost[i, j])
            remaining_rows.discard(i)
            remaining_cols.discard(j)
            if not remaining_rows:
                break
    return total


def match_structures(pred: Crystal, truth: Crystal, stol: float = DEFAULT_STOL,
                     angle_tol_deg: float = DEFAULT_ANGLE_TOL_DEG,
                     ltol: float = DEFAULT_LTOL) -> MatchReport:
    """Match decision plus normalized RMS displacement for a prediction.

    Candidate translations are seeded by aligning each predicted atom with
    each truth atom of the same species; the best species-respecting
    assignment under the minimum-image metric decides.  Matched when the best
    RMS displacement is at most stol * (V/n)^(1/3); the reported rmse is that
    RMS divided by sqrt(V/n).
    """
    no_match = MatchReport(False, None, stol, angle_tol_deg, ltol)
    if pred.num_atoms != truth.num_atoms:
        return no_match
    if sorted(pred.species.tolist()) != sorted(truth.species.tolist()):
        return no_match
    if not _lattice_gate(pred.lattice, truth.lattice, ltol, angle_tol_deg):
        return no_match

    n = truth.num_atoms
    volume = lattice_volume(truth.lattice)
    gate = stol * (volume / n) ** (1.0 / 3.0)
    pred_species = pred.species
    truth_species = truth.species
    species_mask = pred_species[:, None] != truth_species[None, :]

    candidates = []
    seen = set()
    for a in range(n):
        for b in range(n):
            if pred_species[a] != truth_species[b]:
                continue
            shift = wrap(truth.frac_coords[:, b] - pred.frac_coords[:, a])
            key = tuple(np.round(shift, 9))
            if key not in seen:
                seen.add(key)
                candidates.append(shift)

    best_sq = np.inf
    for shift in candidates:
        moved = wrap(pred.frac_coords + shift[:, None])
        cost = _min_image_sq_matrix(truth.lattice, moved, truth.frac_coords)
        cost[species_mask] = _BIG
        total = _assignment_cost(cost)
        best_sq = min(best_sq, total)
        if best_sq == 0.0:
            break
    if not np.isfinite(best_sq):
        return no_match
    rms = float(np.sqrt(best_sq / n))
    if rms > gate:
        return no_match
    return MatchReport(True, rms / np.sqrt(volume / n), stol, angle_tol_deg, ltol)


def normalized_rmse(displacements, volume: float, n: int) -> float:
    """RMS of Cartesian displacements divided by sqrt(V/n).

    Accepts displacement lengths (n,) or displacement vectors (n, 3).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if volume <= 0:
        raise DomainError("volume must be positive")
    arr = np.asarray(displacements, dtype=float)
    lengths = np.linalg.norm(arr, axis=1) if arr.ndim == 2 else np.abs(arr)
    return float(np.sqrt(np.mean(lengths**2)) / np.sqrt(volume / n))


def match_rate(reports) -> float:
    """Percentage of matched reports."""
    reports = list(reports)
    if not reports:
        raise DomainError("match_rate of an empty report list is undefined")
    return 100.0 * sum(r.matched for r in reports) / len(reports)


def rank_score(per_metric_ranks) -> float:
    """Arithmetic mean of per-metric ranks."""
    ranks = list(per_metric_ranks)
    if not ranks:
        raise DomainError("rank_score of an empty rank list is undefined")
    if any(int(r) != r or r < 1 for r in ranks):
        raise DomainError("ranks must be positive integers")
    return float(np.mean(ranks))


def competition_ranks(values, higher_is_better: bool) -> list:
    """Competition ranking: rank = 1 + number of strictly better entries; ties share."""
    values = [float(v) for v in values]
    ranks = []
    for v in values:
        better = sum(1 for w in values if (w > v if higher_is_better else w < v))
        ranks.append(1 + better)
    return ranks


def evaluate_datasets(pred_dataset, truth_dataset, stol: float = DEFAULT_STOL,
                      angle_tol_deg: float = DEFAULT_ANGLE_TOL_DEG,
                      ltol: float = DEFAULT_LTOL):
    """Match every truth structure against its prediction candidates.

    Predictions map to truths by id, with an optional '#k' candidate suffix;
    a truth matches when any candidate matches, and its rmse is the best
    matched candidate's.  Returns (rows, summary) where rows are
    (structure_id, matched, rmse or None).
    """
    from concurrent.futures import ThreadPoolExecutor

    groups: dict = {}
    for pid, crystal in zip(pred_dataset.ids, pred_dataset.crystals):
        base = pid.rsplit("#", 1)[0] if "#" in pid else pid
        groups.setdefault(base, []).append(crystal)
    missing = [tid for tid in truth_dataset.ids if tid not in groups]
    if missing:
        raise ConfigError(f"no predictions for truth ids: {missing[:5]}"
                          + ("..." if len(missing) > 5 else ""))

    def judge(item):
        tid, truth = item
        best: MatchReport | None = None
        for candidate in groups[tid]:
            report = match_structures(candidate, truth, stol, angle_tol_deg, ltol)
            if best is None or (report.matched and
                                (not best.matched or report.rmse < best.rmse)):
                best = report
        return tid, best

    items = list(zip(truth_dataset.ids, truth_dataset.crystals))
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        judged = [judge(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            judged = list(pool.map(judge, items))

    rows = [(tid, report.matched, report.rmse) for tid, report in judged]
    reports = [report for _, report in judged]
    matched_rmse = [r.rmse for r in reports if r.matched]
    summary = {
        "num_structures": len(rows),
        "match_rate": match_rate(reports),
        "mean_rmse_matched": float(np.mean(matched_rmse)) if matched_rmse else None,
        "stol": stol,
        "angle_tol_deg": angle_tol_deg,
        "ltol": ltol,
    }
    return rows, summary

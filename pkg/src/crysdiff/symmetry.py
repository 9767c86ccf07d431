"""Mechanical verification of the denoiser's symmetry claims.

Each check exercises a transformation on randomized inputs and reports the
worst-case deviation; the properties are architectural, so they must hold for
untrained parameters.  Every check is paired with a mutation run that feeds
the network a deliberately symmetry-breaking variant and must *fail* the
check, guarding against vacuous passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coord_diffusion import SigmaSchedule
from .crystal import Crystal, wrap
from .denoiser import DenoiserParams, denoise
from .hypergraph import HypergraphConfig, build_hypergraph
from .lattice_diffusion import make_cosine_schedule
from .sampler import SampleConfig, sample_structure

# Pairing of invariance checks with the mutation that must break them.
MUTATION_FOR_CHECK = {
    "o3_equivariance": "raw_lattice",
    "periodic_translation": "absolute_coords",
    "permutation": "node_index",
    "sampler_pushforward": "no_lattice_mix",
}

_CHECK_T_MAX = 100  # diffusion steps sampled for single-call checks


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    max_deviation: float
    tolerance: float
    passed: bool
    kind: str = "invariance"  # invariance | mutation

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "kind": self.kind,
        }


@dataclass
class SymmetryReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {"all_passed": self.all_passed, "checks": [c.to_json_dict() for c in self.checks]}

    def format_table(self) -> str:
        width = max(len(c.name) for c in self.checks) + 2
        lines = [f"{'check':<{width}}{'kind':<12}{'trials':>7}{'max deviation':>16}{'tolerance':>12}  status"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{c.name:<{width}}{c.kind:<12}{c.trials:>7}{c.max_deviation:>16.3e}"
                f"{c.tolerance:>12.1e}  {status}"
            )
        return "\n".join(lines)


def random_orthogonal(rng: np.random.Generator) -> np.ndarray:
    """Haar-ish orthogonal 3x3 via sign-fixed QR; produces both determinant signs."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


def _default_check_crystal(rng: np.random.Generator, n_atoms: int = 5,
                           num_species: int = 3) -> Crystal:
    """Well-conditioned random triclinic cell with random occupancy."""
    while True:
        lengths = rng.uniform(3.0, 5.0, size=3)
        shear = np.eye(3) + 0.12 * rng.uniform(-1.0, 1.0, size=(3, 3))
        lattice = random_orthogonal(rng) @ np.diag(lengths) @ shear
        if np.linalg.cond(lattice) < 10.0:
            break
    species = rng.integers(0, num_species, size=n_atoms)
    species[:num_species] = np.arange(num_species)  # every channel occupied
    frac = rng.uniform(0.0, 1.0, size=(3, n_atoms))
    return Crystal.from_species(species, frac, lattice, num_species=num_species)


def _graph_config() -> HypergraphConfig:
    return HypergraphConfig(mode="sphere", pairwise_augment=True)


def _evaluate(params, crystal, frac, lattice, t, mutation):
    graph = build_hypergraph(frac, lattice, _graph_config())
    return denoise(crystal.atom_types, frac, lattice, t, graph, params, mutation=mutation)


def check_o3_equivariance(params: DenoiserParams, crystal: Crystal, trials: int = 20,
                          tol: float = 1e-8, rng=None, mutation=None) -> CheckResult:
    """eps_L(QL) must equal Q eps_L(L); eps_F must not move at all."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        t = int(rng.integers(1, _CHECK_T_MAX + 1))
        q = random_orthogonal(rng)
        base_l, base_f = _evaluate(params, crystal, crystal.frac_coords, crystal.lattice, t, mutation)
        rot_l, rot_f = _evaluate(params, crystal, crystal.frac_coords, q @ crystal.lattice, t, mutation)
        worst = max(
            worst,
            float(np.max(np.abs(rot_l - q @ base_l))),
            float(np.max(np.abs(rot_f - base_f))),
        )
    name = "o3_equivariance" + ("_mutation" if mutation else "")
    kind = "mutation" if mutation else "invariance"
    passed = worst > tol if mutation else worst < tol
    return CheckResult(name, trials, worst, tol, passed, kind)


def check_periodic_translation(params: DenoiserParams, crystal: Crystal, trials: int = 20,
                               tol: float = 1e-8, rng=None, mutation=None) -> CheckResult:
    """Both outputs must be unchanged when all coordinates shift by a common vector."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(trials):
        t = int(rng.integers(1, _CHECK_T_MAX + 1))
        shift = rng.uniform(-1.5, 1.5, size=3)
        base_l, base_f = _evaluate(params, crystal, crystal.frac_coords, crystal.lattice, t, mutation)
        moved = wrap(crystal.frac_coords + shift[:, None])
        new_l, new_f = _evaluate(params, crystal, moved, crystal.lattice, t, mutation)
        worst = max(
            worst,
            float(np.max(np.abs(new_l - base_l))),
            float(np.max(np.abs(new_f - base_f))),
        )
    name = "periodic_translation" + ("_mutation" if mutation else "")
    kind = "mutation" if mutation else "invariance"
    passed = worst > tol if mutation else worst < tol
    return CheckResult(name, trials, worst, tol, passed, kind)


def check_permutation(params: DenoiserParams, crystal: Crystal, trials: int = 20,
                      tol: float = 1e-10, rng=None, mutation=None) -> CheckResult:
    """Relabelling atoms must permute eps_F columns and leave eps_L unchanged."""
    rng = np.random.default_rng(rng)
    n = crystal.num_atoms
    worst = 0.0
    for _ in range(trials):
        t = int(rng.integers(1, _CHECK_T_MAX + 1))
        perm = rng.permutation(n)
        while n > 1 and np.array_equal(perm, np.arange(n)):
            perm = rng.permutation(n)
        base_l, base_f = _evaluate(params, crystal, crystal.frac_coords, crystal.lattice, t, mutation)
        permuted = Crystal(
            crystal.atom_types[:, perm], crystal.frac_coords[:, perm], crystal.lattice
        )
        new_l, new_f = _evaluate(params, permuted, permuted.frac_coords, permuted.lattice, t, mutation)
        worst = max(
            worst,
            float(np.max(np.abs(new_l - base_l))),
            float(np.max(np.abs(new_f - base_f[:, perm]))),
        )
    name = "permutation" + ("_mutation" if mutation else "")
    kind = "mutation" if mutation else "invariance"
    passed = worst > tol if mutation else worst < tol
    return CheckResult(name, trials, worst, tol, passed, kind)


def check_sampler_pushforward(params: DenoiserParams, species, seeds: int = 3,
                              rotations: int = 3, t_steps: int = 50, tol: float = 1e-5,
                              rng=None, mutation=None) -> CheckResult:
    """Rotating the lattice noise stream must rotate the final sampled lattice.

    Runs paired trajectories from identical seeds; the operational content of
    the pushforward-invariance claim for the generated lattice distribution.
    """
    rng = np.random.default_rng(rng)
    sigma = SigmaSchedule.make(t_steps)
    beta = make_cosine_schedule(t_steps)
    config = SampleConfig(hypergraph=_graph_config())
    worst = 0.0
    trial_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=seeds)]
    for seed in trial_seeds:
        for _ in range(rotations):
            q = random_orthogonal(rng)
            base = sample_structure(
                species, params, sigma, beta, config, np.random.default_rng(seed),
                mutation=mutation,
            )
            rotated = sample_structure(
                species, params, sigma, beta, config, np.random.default_rng(seed),
                lattice_noise_transform=lambda m: q @ m, mutation=mutation,
            )
            worst = max(worst, float(np.max(np.abs(rotated.lattice - q @ base.lattice))))
    name = "sampler_pushforward" + ("_mutation" if mutation else "")
    kind = "mutation" if mutation else "invariance"
    passed = worst > tol if mutation else worst < tol
    return CheckResult(name, seeds * rotations, worst, tol, passed, kind)


def run_symmetry_suite(params: DenoiserParams, seed: int = 0, trials: int = 20,
                       include_mutations: bool = True, crystal: Crystal | None = None,
                       include_pushforward: bool = True,
                       pushforward_steps: int = 50) -> SymmetryReport:
    """Run every check (and its paired mutation) against the given parameters."""
    master = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in master.spawn(9)]
    if crystal is None:
        crystal = _default_check_crystal(streams[8], num_species=params.config.num_species)
    checks = [
        check_o3_equivariance(params, crystal, trials, rng=streams[0]),
        check_periodic_translation(params, crystal, trials, rng=streams[1]),
        check_permutation(params, crystal, trials, rng=streams[2]),
    ]
    if include_mutations:
        checks.append(check_o3_equivariance(
            params, crystal, trials, rng=streams[3], mutation=MUTATION_FOR_CHECK["o3_equivariance"]))
        checks.append(check_periodic_translation(
            params, crystal, trials, rng=streams[4], mutation=MUTATION_FOR_CHECK["periodic_translation"]))
        checks.append(check_permutation(
            params, crystal, trials, rng=streams[5], mutation=MUTATION_FOR_CHECK["permutation"]))
    if include_pushforward:
        checks.append(check_sampler_pushforward(
            params, crystal.species, t_steps=pushforward_steps, rng=streams[6]))
        if include_mutations:
            checks.append(check_sampler_pushforward(
                params, crystal.species, seeds=1, rotations=1, t_steps=pushforward_steps,
                rng=streams[7], mutation=MUTATION_FOR_CHECK["sampler_pushforward"]))
    return SymmetryReport(checks)

"""Hypergraph construction over periodic crystals.

Hyperedges are found by scanning a sphere or an axis-aligned Cartesian cube
around every atom, with neighbours looked up through periodic images.  The
scan is atom-centred, deterministic, and invariant under periodic translation
of the fractional coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crystal import Crystal, min_image_distance_matrix, _MIC_OFFSETS
from .errors import ConfigError, DomainError, GraphError, OversizeHyperedgeError

# Raw scan neighbourhoods larger than this abort instead of truncating.
HARD_CAP = 32


@dataclass(frozen=True)
class Hypergraph:
    """Node set plus deduplicated hyperedges of order >= 2.

    `hyperedges` holds sorted index tuples in lexicographic order; `degrees`
    counts, per node, the hyperedges containing it.  `weights` is a uniform
    1.0 per hyperedge, reserved for interaction strengths (unused by the
    denoiser).
    """

    num_nodes: int
    hyperedges: tuple
    degrees: np.ndarray = field(compare=False)
    weights: tuple = ()

    def __post_init__(self):
        seen = set()
        for edge in self.hyperedges:
            if len(edge) < 2:
                raise GraphError(f"hyperedge {edge} has fewer than 2 nodes")
            if list(edge) != sorted(set(edge)):
                raise GraphError(f"hyperedge {edge} is not a sorted duplicate-free tuple")
            if edge[0] < 0 or edge[-1] >= self.num_nodes:
                raise GraphError(f"hyperedge {edge} has node index out of range")
            if edge in seen:
                raise GraphError(f"duplicate hyperedge {edge}")
            seen.add(edge)
        degrees = np.asarray(self.degrees, dtype=int)
        if degrees.shape != (self.num_nodes,):
            raise GraphError("degrees length must equal num_nodes")
        if not np.array_equal(degrees, node_degrees(self)):
            raise GraphError("degrees inconsistent with hyperedges")
        degrees = degrees.copy()
        degrees.flags.writeable = False
        object.__setattr__(self, "degrees", degrees)
        if not self.weights:
            object.__setattr__(self, "weights", tuple(1.0 for _ in self.hyperedges))

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "Hypergraph":
        """Canonicalize raw index collections: sort, deduplicate, order, count degrees."""
        canonical = sorted({tuple(sorted(set(int(i) for i in e))) for e in edges})
        degrees = np.zeros(num_nodes, dtype=int)
        for edge in canonical:
            if edge and (edge[0] < 0 or edge[-1] >= num_nodes):
                raise GraphError(f"hyperedge {edge} has node index out of range")
            for node in edge:
                degrees[node] += 1
        return cls(num_nodes, tuple(canonical), degrees)

    @property
    def num_hyperedges(self) -> int:
        return len(self.hyperedges)

    def to_json_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "hyperedges": [list(e) for e in self.hyperedges],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Hypergraph":
        return cls.from_edges(int(doc["num_nodes"]), doc["hyperedges"])


def node_degrees(graph: Hypergraph) -> np.ndarray:
    """Per-node count of hyperedges containing the node."""
    degrees = np.zeros(graph.num_nodes, dtype=int)
    for edge in graph.hyperedges:
        for node in edge:
            degrees[node] += 1
    return degrees


@dataclass(frozen=True)
class HypergraphConfig:
    """How to build hypergraphs from a crystal.

    Absolute `radius`/`side` win when set; otherwise the radius defaults to
    `radius_scale` times the shortest lattice-vector length and the side to
    `side_scale` times that radius.  `pairwise_augment` adds every atom pair
    as an order-2 hyperedge on top of the scan result.
    """

    mode: str = "sphere"  # sphere | cube | pairwise
    radius: float | None = None
    radius_scale: float = 0.55
    side: float | None = None
    side_scale: float = 1.1
    max_order: int = 6
    pairwise_augment: bool = False
    hard_cap: int = HARD_CAP

    def __post_init__(self):
        if self.mode not in ("sphere", "cube", "pairwise"):
            raise ConfigError(f"unknown hypergraph mode {self.mode!r}")
        if self.max_order < 2:
            raise ConfigError("max_order must be >= 2")
        if self.radius is not None and self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.side is not None and self.side <= 0:
            raise ConfigError("side must be positive")


def _scan_edges(members_per_atom, distances, max_order, hard_cap):
    """Truncate raw neighbourhoods to the nearest max_order atoms and collect edges."""
    edges = []
    for center, members in enumerate(members_per_atom):
        if len(members) > hard_cap:
            raise OversizeHyperedgeError(
                f"scan volume around atom {center} holds {len(members)} atoms "
                f"(cap {hard_cap}); use a smaller radius/side"
            )
        if len(members) < 2:
            continue
        if len(members) > max_order:
            ranked = sorted(members, key=lambda j: (distances[center, j], j))
            members = ranked[:max_order]
        edges.append(tuple(sorted(members)))
    return edges


def build_sphere_hyperedges(
    crystal: Crystal, radius: float, max_order: int = 6, hard_cap: int = HARD_CAP
) -> Hypergraph:
    """Hyperedges from spheres of `radius` centred on each atom (minimum-image metric)."""
    return _build_sphere(crystal.frac_coords, crystal.lattice, radius, max_order, hard_cap)


def build_cube_hyperedges(
    crystal: Crystal, side: float, max_order: int = 6, hard_cap: int = HARD_CAP
) -> Hypergraph:
    """Hyperedges from axis-aligned Cartesian cubes of side `side` centred on each atom."""
    return _build_cube(crystal.frac_coords, crystal.lattice, side, max_order, hard_cap)


def augment_pairwise(graph: Hypergraph, crystal: Crystal) -> Hypergraph:
    """Add every atom pair {i, j} as an order-2 hyperedge, deduplicated."""
    if crystal.num_atoms != graph.num_nodes:
        raise GraphError("crystal atom count does not match hypergraph node count")
    n = graph.num_nodes
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Hypergraph.from_edges(n, list(graph.hyperedges) + pairs)


def _build_sphere(frac_coords, lattice, radius, max_order, hard_cap):
    if radius <= 0:
        raise DomainError("radius must be positive")
    n = frac_coords.shape[1]
    dist = min_image_distance_matrix(lattice, frac_coords)
    members = [np.nonzero(dist[i] <= radius)[0].tolist() for i in range(n)]
    return Hypergraph.from_edges(n, _scan_edges(members, dist, max_order, hard_cap))


def _build_cube(frac_coords, lattice, side, max_order, hard_cap):
    if side <= 0:
        raise DomainError("side must be positive")
    n = frac_coords.shape[1]
    pts = np.asarray(frac_coords, dtype=float).T
    diff = pts[None, :, :] - pts[:, None, :]  # f_j - f_i at [i, j]
    cart = (diff[:, :, None, :] + _MIC_OFFSETS[None, None, :, :]) @ np.asarray(lattice).T
    inside = np.any(np.all(np.abs(cart) <= side / 2.0, axis=-1), axis=-1)
    dist = min_image_distance_matrix(lattice, frac_coords)
    members = [np.nonzero(inside[i])[0].tolist() for i in range(n)]
    return Hypergraph.from_edges(n, _scan_edges(members, dist, max_order, hard_cap))


def effective_radius(lattice, config: HypergraphConfig) -> float:
    """Scan radius implied by the config for a given lattice."""
    if config.radius is not None:
        return config.radius
    shortest = float(np.min(np.linalg.norm(np.asarray(lattice, dtype=float), axis=0)))
    return config.radius_scale * shortest


def build_hypergraph(frac_coords, lattice, config: HypergraphConfig) -> Hypergraph:
    """Build a hypergraph from raw (frac_coords, lattice) arrays per config.

    Accepts arbitrary lattices (including noisy ones seen mid-diffusion), so
    it does not require a validated Crystal.
    """
    frac_coords = np.asarray(frac_coords, dtype=float)
    n = frac_coords.shape[1]
    if config.mode == "pairwise":
        graph = Hypergraph.from_edges(n, [])
    elif config.mode == "sphere":
        graph = _build_sphere(
            frac_coords, lattice, effective_radius(lattice, config), config.max_order, config.hard_cap
        )
    else:
        side = config.side if config.side is not None else config.side_scale * effective_radius(lattice, config)
        graph = _build_cube(frac_coords, lattice, side, config.max_order, config.hard_cap)
    if config.mode == "pairwise" or config.pairwise_augment:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        graph = Hypergraph.from_edges(n, list(graph.hyperedges) + pairs)
    return graph

"""Equivariant hypergraph denoiser.

Given (atom types, noisy fractional coordinates, noisy lattice, step t) and a
hypergraph over the atoms, the network predicts lattice noise and a
coordinate score.  Geometry enters only through quantities that are invariant
by construction: the lattice Gram matrix L^T L and period-1 Fourier features
of wrapped coordinate differences.  The lattice readout left-multiplies by L,
which is what makes the lattice output O(3) equivariant.

Three variants of the per-hyperedge Fourier pooling are available:

* ``directed`` (default): each member of a hyperedge receives a message that
  also sees the Fourier features of the differences pointing from that member
  to its co-members.  Direction-aware, hence able to represent odd score
  fields; still permutation equivariant and translation invariant.
* ``symmetric``: one receiver-agnostic message per hyperedge whose Fourier
  block is the mean over all ordered member pairs.  The mean cancels every
  sine channel, so the features are blind to inversion of the configuration.
* ``literal``: the Fourier map applied to the *sum* of ordered pairwise
  differences, which cancels to (nearly) zero; kept for ablation only.

The forward pass can record a tape; ``denoise_backward`` turns output
gradients into exact parameter gradients for training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crystal import periodic_diff
from .errors import ConfigError, GraphError, ShapeError, SpeciesError
from .hypergraph import Hypergraph
from .nn import (
    GradTape,
    Mlp,
    MlpGrads,
    forward_with_tape,
    init_params,
    mlp_backward,
)

PSI_MODES = ("directed", "symmetric", "literal")

# Forward-only instrumentation used by the symmetry verifier's mutation tests.
MUTATIONS = ("raw_lattice", "absolute_coords", "node_index", "no_lattice_mix")

# The Gram block enters as tanh(L^T L / GRAM_FEATURE_SCALE): order-one for
# angstrom-scale cells and saturating, so reverse-diffusion trajectories stay
# bounded even under untrained parameters.  A fixed elementwise map of L^T L
# preserves every network invariance.
GRAM_FEATURE_SCALE = 10.0


@dataclass(frozen=True)
class DenoiserConfig:
    num_species: int
    hidden_dim: int = 128
    num_layers: int = 4
    fourier_k: int = 16
    time_embed_dim: int = 64
    atom_embed_dim: int = 64
    order_embed_dim: int = 16
    max_order: int = 6
    psi_mode: str = "directed"
    activation: str = "silu"

    def __post_init__(self):
        if self.num_species < 1:
            raise ConfigError("num_species must be >= 1")
        if self.time_embed_dim % 2 != 0:
            raise ConfigError("time_embed_dim must be even")
        if self.psi_mode not in PSI_MODES:
            raise ConfigError(f"psi_mode must be one of {PSI_MODES}")
        if self.max_order < 2:
            raise ConfigError("max_order must be >= 2")
        if min(self.hidden_dim, self.num_layers, self.fourier_k,
               self.atom_embed_dim, self.order_embed_dim) < 1:
            raise ConfigError("network dimensions must be positive")

    @property
    def psi_dim(self) -> int:
        return 6 * self.fourier_k

    @property
    def message_input_dim(self) -> int:
        return self.hidden_dim + 9 + 2 * self.psi_dim + self.order_embed_dim


@dataclass
class LayerParams:
    message: Mlp
    update: Mlp


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    atom_embed: np.ndarray   # (num_species, atom_embed_dim)
    order_embed: np.ndarray  # (max_order - 1, order_embed_dim); row k is order k+2
    input_mlp: Mlp
    layers: list
    readout_lattice: Mlp     # hidden -> 9, reshaped to the 3x3 mixing matrix
    readout_coord: Mlp       # hidden -> 3 per atom


def init_denoiser(config: DenoiserConfig, seed) -> DenoiserParams:
    """Deterministic parameter initialization for the full denoiser stack."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    atom_embed = rng.standard_normal((config.num_species, config.atom_embed_dim))
    atom_embed /= np.sqrt(config.atom_embed_dim)
    order_embed = rng.standard_normal((config.max_order - 1, config.order_embed_dim))
    order_embed /= np.sqrt(config.order_embed_dim)
    h = config.hidden_dim
    act = config.activation
    input_mlp = init_params(
        (config.atom_embed_dim + config.time_embed_dim, h, h), rng, act
    )
    layers = [
        LayerParams(
            message=init_params((config.message_input_dim, h, h), rng, act),
            update=init_params((2 * h, h, h), rng, act),
        )
        for _ in range(config.num_layers)
    ]
    readout_lattice = init_params((h, h, 9), rng, act)
    readout_coord = init_params((h, h, 3), rng, act)
    return DenoiserParams(
        config, atom_embed, order_embed, input_mlp, layers, readout_lattice, readout_coord
    )


# ---------------------------------------------------------------------------
# Feature maps


def fourier_psi(d, k: int) -> np.ndarray:
    """Period-1 Fourier features of a 3-vector: psi[c, 2m-2]=sin(2 pi m d_c),
    psi[c, 2m-1]=cos(2 pi m d_c) for m = 1..k, shape (3, 2k)."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    d = np.asarray(d, dtype=float)
    ang = 2.0 * np.pi * np.arange(1, k + 1)[None, :] * d[:, None]
    out = np.empty((3, 2 * k))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out


def _psi_flat(diffs, k: int) -> np.ndarray:
    """fourier_psi over a (..., 3) stack, flattened row-major to (..., 6k)."""
    diffs = np.asarray(diffs, dtype=float)
    ang = 2.0 * np.pi * diffs[..., :, None] * np.arange(1, k + 1)
    out = np.empty(diffs.shape[:-1] + (3, 2 * k))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out.reshape(diffs.shape[:-1] + (6 * k,))


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal positional encoding of the diffusion step, frequencies 1..1e4."""
    half = dim // 2
    denom = 10000.0 ** (2.0 * np.arange(half) / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(t / denom)
    out[1::2] = np.cos(t / denom)
    return out


def _species_of(atom_types, num_species: int) -> np.ndarray:
    atom_types = np.asarray(atom_types, dtype=float)
    if atom_types.ndim != 2:
        raise ShapeError("atom_types must be (num_species, N)")
    if atom_types.shape[0] != num_species:
        raise SpeciesError(
            f"atom_types has {atom_types.shape[0]} species channels, model expects {num_species}"
        )
    cols = atom_types.sum(axis=0)
    if not (np.all((atom_types == 0.0) | (atom_types == 1.0)) and np.all(cols == 1.0)):
        raise SpeciesError("atom_types columns must be one-hot")
    return np.argmax(atom_types, axis=0)


def _embed_with_tape(atom_types, t, params: DenoiserParams, mutation=None):
    cfg = params.config
    species = _species_of(atom_types, cfg.num_species)
    n = species.size
    time_row = time_embedding(t, cfg.time_embed_dim)
    x = np.concatenate(
        [params.atom_embed[species], np.tile(time_row, (n, 1))], axis=1
    )
    states, tape = forward_with_tape(params.input_mlp, x)
    if mutation == "node_index":
        states = states + (np.arange(n) / max(n, 1))[:, None]
    return states, tape, species


def embed_inputs(atom_types, t, params: DenoiserParams) -> np.ndarray:
    """Initial node states h^(0) from species embedding and time encoding; (N, hidden)."""
    states, _, _ = _embed_with_tape(atom_types, t, params)
    return states


# ---------------------------------------------------------------------------
# Hypergraph layout and per-call geometry features


@dataclass
class _GraphLayout:
    edges: list                    # member index arrays, one per hyperedge
    orders: np.ndarray             # (E,)
    member_node: np.ndarray        # (M,) flattened members
    member_edge: np.ndarray        # (M,) owning edge per member entry
    row_edge: np.ndarray           # (R,) edge per message row
    row_receiver: np.ndarray | None  # (R,) receiver per message row; None when shared


def _build_layout(graph: Hypergraph, num_atoms: int, directed: bool) -> _GraphLayout:
    if graph.num_nodes != num_atoms:
        raise GraphError(
            f"hypergraph has {graph.num_nodes} nodes but crystal has {num_atoms} atoms"
        )
    edges = [np.asarray(e, dtype=int) for e in graph.hyperedges]
    orders = np.array([len(e) for e in edges], dtype=int)
    if edges:
        member_node = np.concatenate(edges)
        member_edge = np.repeat(np.arange(len(edges)), orders)
    else:
        member_node = np.zeros(0, dtype=int)
        member_edge = np.zeros(0, dtype=int)
    if directed:
        row_edge, row_receiver = member_edge, member_node
    else:
        row_edge, row_receiver = np.arange(len(edges)), None
    return _GraphLayout(edges, orders, member_node, member_edge, row_edge, row_receiver)


@dataclass
class _GeometryFeatures:
    gram_flat: np.ndarray            # (9,)
    psi_edge: np.ndarray             # (E, 6K)
    psi_recv: np.ndarray | None      # (R, 6K) in directed mode


def _geometry_features(layout: _GraphLayout, lattice, frac_coords,
                       cfg: DenoiserConfig, mutation=None) -> _GeometryFeatures:
    lattice = np.asarray(lattice, dtype=float)
    if mutation == "raw_lattice":
        gram_flat = np.tanh(lattice.reshape(9) / GRAM_FEATURE_SCALE)
    else:
        gram_flat = np.tanh((lattice.T @ lattice).reshape(9) / GRAM_FEATURE_SCALE)
    k = cfg.fourier_k
    psi_edge = np.zeros((len(layout.edges), cfg.psi_dim))
    recv_blocks = [] if cfg.psi_mode == "directed" else None
    frac = np.asarray(frac_coords, dtype=float)
    for e, members in enumerate(layout.edges):
        pts = frac[:, members].T  # (o, 3)
        diffs = periodic_diff(pts[:, None, :], pts[None, :, :])  # [a, b] = f_b - f_a
        o = len(members)
        off_diag = ~np.eye(o, dtype=bool)
        if cfg.psi_mode == "literal":
            psi_edge[e] = _psi_flat(diffs[off_diag].sum(axis=0), k)
        else:
            psi_edge[e] = _psi_flat(diffs[off_diag], k).mean(axis=0)
        if recv_blocks is not None:
            # Receiver a sees the mean of psi(f_b - f_a) over its co-members b.
            psi_ab = _psi_flat(diffs, k)
            sums = psi_ab.sum(axis=1) - psi_ab[np.arange(o), np.arange(o)]
            recv_blocks.append(sums / max(o - 1, 1))
    psi_recv = np.concatenate(recv_blocks, axis=0) if recv_blocks else None
    if cfg.psi_mode == "directed" and psi_recv is None:
        psi_recv = np.zeros((0, cfg.psi_dim))
    return _GeometryFeatures(gram_flat, psi_edge, psi_recv)


# ---------------------------------------------------------------------------
# Message-passing layer


@dataclass
class _LayerTape:
    message_tape: GradTape | None
    update_tape: GradTape


def _layer_forward(states, layout: _GraphLayout, geom: _GeometryFeatures,
                   layer: LayerParams, params: DenoiserParams):
    cfg = params.config
    n, h = states.shape
    num_rows = layout.row_edge.size
    m = np.zeros((n, h))
    message_tape = None
    if num_rows:
        sum_h = np.zeros((len(layout.edges), h))
        np.add.at(sum_h, layout.member_edge, states[layout.member_node])
        mean_h = sum_h / layout.orders[:, None]
        row_orders = layout.orders[layout.row_edge]
        blocks = [
            mean_h[layout.row_edge],
            np.tile(geom.gram_flat, (num_rows, 1)),
            geom.psi_edge[layout.row_edge],
            geom.psi_recv if geom.psi_recv is not None else np.zeros((num_rows, cfg.psi_dim)),
            params.order_embed[np.clip(row_orders, 2, cfg.max_order) - 2],
        ]
        msg_in = np.concatenate(blocks, axis=1)
        msg_out, message_tape = forward_with_tape(layer.message, msg_in)
        scaled = msg_out / row_orders[:, None]
        if layout.row_receiver is not None:
            np.add.at(m, layout.row_receiver, scaled)
        else:
            np.add.at(m, layout.member_node, scaled[layout.member_edge])
    upd_in = np.concatenate([states, m], axis=1)
    upd_out, update_tape = forward_with_tape(layer.update, upd_in)
    return states + upd_out, _LayerTape(message_tape, update_tape)


def _layer_backward(d_out, tape: _LayerTape, layout: _GraphLayout,
                    layer: LayerParams, params: DenoiserParams):
    cfg = params.config
    h = cfg.hidden_dim
    upd_grads, d_upd_in = mlp_backward(layer.update, tape.update_tape, d_out)
    d_states = d_out + d_upd_in[:, :h]
    d_m = d_upd_in[:, h:]
    msg_grads = None
    d_order = np.zeros_like(params.order_embed)
    if tape.message_tape is not None:
        row_orders = layout.orders[layout.row_edge]
        if layout.row_receiver is not None:
            d_rows = d_m[layout.row_receiver] / row_orders[:, None]
        else:
            per_member = d_m[layout.member_node] / layout.orders[layout.member_edge][:, None]
            d_rows = np.zeros((len(layout.edges), h))
            np.add.at(d_rows, layout.member_edge, per_member)
        msg_grads, d_msg_in = mlp_backward(layer.message, tape.message_tape, d_rows)
        d_mean_rows = d_msg_in[:, :h]
        if layout.row_receiver is not None:
            d_mean_edge = np.zeros((len(layout.edges), h))
            np.add.at(d_mean_edge, layout.row_edge, d_mean_rows)
        else:
            d_mean_edge = d_mean_rows
        scatter = d_mean_edge[layout.member_edge] / layout.orders[layout.member_edge][:, None]
        np.add.at(d_states, layout.member_node, scatter)
        np.add.at(
            d_order,
            np.clip(row_orders, 2, cfg.max_order) - 2,
            d_msg_in[:, -cfg.order_embed_dim:],
        )
    return d_states, upd_grads, msg_grads, d_order


def ehnn_layer(states, graph: Hypergraph, lattice, frac_coords,
               layer_params: LayerParams, params: DenoiserParams,
               mutation=None) -> np.ndarray:
    """One message-passing layer: hyperedge messages, order-normalized
    aggregation, residual node update.  Returns the new (N, hidden) states."""
    states = np.asarray(states, dtype=float)
    layout = _build_layout(graph, states.shape[0], params.config.psi_mode == "directed")
    geom = _geometry_features(layout, lattice, frac_coords, params.config, mutation)
    new_states, _ = _layer_forward(states, layout, geom, layer_params, params)
    return new_states


# ---------------------------------------------------------------------------
# Readout and full forward/backward


def readout(states, lattice, params: DenoiserParams, coord_scale: float = 1.0,
            mutation=None):
    """Final heads: eps_L = L @ reshape(phi(mean h)), eps_F[:, i] = phi_F(h_i)/scale."""
    (eps_l, eps_f), _ = _readout_with_tape(states, lattice, params, coord_scale, mutation)
    return eps_l, eps_f


def _readout_with_tape(states, lattice, params: DenoiserParams,
                       coord_scale: float, mutation=None):
    states = np.asarray(states, dtype=float)
    lattice = np.asarray(lattice, dtype=float)
    pooled = states.mean(axis=0)
    phi_out, lattice_tape = forward_with_tape(params.readout_lattice, pooled)
    mix = phi_out.reshape(3, 3)
    eps_l = mix if mutation == "no_lattice_mix" else lattice @ mix
    coord_out, coord_tape = forward_with_tape(params.readout_coord, states)
    eps_f = coord_out.T / coord_scale
    return (eps_l, eps_f), (lattice_tape, coord_tape)


@dataclass
class DenoiseTape:
    params: DenoiserParams
    layout: _GraphLayout
    species: np.ndarray
    input_tape: GradTape
    layer_tapes: list
    lattice_tape: GradTape
    coord_tape: GradTape
    lattice: np.ndarray
    coord_scale: float
    num_atoms: int


def denoise_with_tape(atom_types, frac_coords, lattice, t, graph: Hypergraph,
                      params: DenoiserParams, sigma_t: float | None = None):
    """Full forward pass keeping the tape needed for parameter gradients.

    `sigma_t` conditions the coordinate head: the raw head output is divided
    by sigma_t so the network only has to learn order-one values while the
    emitted estimate matches the 1/sigma growth of the true score.
    """
    frac_coords = np.asarray(frac_coords, dtype=float)
    coord_scale = 1.0 if sigma_t is None else float(sigma_t)
    states, input_tape, species = _embed_with_tape(atom_types, t, params)
    layout = _build_layout(graph, states.shape[0], params.config.psi_mode == "directed")
    geom = _geometry_features(layout, lattice, frac_coords, params.config)
    layer_tapes = []
    for layer in params.layers:
        states, layer_tape = _layer_forward(states, layout, geom, layer, params)
        layer_tapes.append(layer_tape)
    (eps_l, eps_f), (lattice_tape, coord_tape) = _readout_with_tape(
        states, lattice, params, coord_scale
    )
    tape = DenoiseTape(
        params, layout, species, input_tape, layer_tapes, lattice_tape, coord_tape,
        np.asarray(lattice, dtype=float), coord_scale, states.shape[0],
    )
    return (eps_l, eps_f), tape


def denoise(atom_types, frac_coords, lattice, t, graph: Hypergraph,
            params: DenoiserParams, sigma_t: float | None = None, mutation=None):
    """Predict (lattice noise 3x3, coordinate score 3xN); pure and deterministic."""
    if mutation is None:
        (eps_l, eps_f), _ = denoise_with_tape(
            atom_types, frac_coords, lattice, t, graph, params, sigma_t
        )
        return eps_l, eps_f
    if mutation not in MUTATIONS:
        raise ConfigError(f"unknown mutation {mutation!r}")
    frac_coords = np.asarray(frac_coords, dtype=float)
    coord_scale = 1.0 if sigma_t is None else float(sigma_t)
    states, _, _ = _embed_with_tape(atom_types, t, params, mutation)
    if mutation == "absolute_coords":
        states = states.copy()
        states[:, :3] += frac_coords.T
    layout = _build_layout(graph, states.shape[0], params.config.psi_mode == "directed")
    geom = _geometry_features(layout, lattice, frac_coords, params.config, mutation)
    for layer in params.layers:
        states, _ = _layer_forward(states, layout, geom, layer, params)
    (eps_l, eps_f), _ = _readout_with_tape(states, lattice, params, coord_scale, mutation)
    return eps_l, eps_f


def _store_mlp_grads(out: dict, prefix: str, grads: MlpGrads | None, like: Mlp) -> None:
    for k in range(like.num_layers):
        if grads is None:
            out[f"{prefix}.w{k}"] = np.zeros_like(like.weights[k])
            out[f"{prefix}.b{k}"] = np.zeros_like(like.biases[k])
        else:
            out[f"{prefix}.w{k}"] = grads.weights[k]
            out[f"{prefix}.b{k}"] = grads.biases[k]


def denoise_backward(tape: DenoiseTape, d_eps_l, d_eps_f) -> dict:
    """Exact gradients of a taped forward pass w.r.t. every parameter.

    Returns a flat dict matching params_to_dict's keys.
    """
    params = tape.params
    cfg = params.config
    grads: dict = {}
    d_eps_l = np.asarray(d_eps_l, dtype=float)
    d_eps_f = np.asarray(d_eps_f, dtype=float)
    # Readouts.
    d_phi = (tape.lattice.T @ d_eps_l).reshape(9)
    lat_grads, d_pooled = mlp_backward(params.readout_lattice, tape.lattice_tape, d_phi)
    _store_mlp_grads(grads, "readout_lattice", lat_grads, params.readout_lattice)
    coord_grads, d_states = mlp_backward(
        params.readout_coord, tape.coord_tape, d_eps_f.T / tape.coord_scale
    )
    _store_mlp_grads(grads, "readout_coord", coord_grads, params.readout_coord)
    d_states = d_states + d_pooled[None, :] / tape.num_atoms
    # Layers, top down.
    d_order_total = np.zeros_like(params.order_embed)
    for index in range(cfg.num_layers - 1, -1, -1):
        layer = params.layers[index]
        d_states, upd_grads, msg_grads, d_order = _layer_backward(
            d_states, tape.layer_tapes[index], tape.layout, layer, params
        )
        _store_mlp_grads(grads, f"layers.{index}.update", upd_grads, layer.update)
        _store_mlp_grads(grads, f"layers.{index}.message", msg_grads, layer.message)
        d_order_total += d_order
    grads["order_embed"] = d_order_total
    # Input embedding.
    in_grads, d_x = mlp_backward(params.input_mlp, tape.input_tape, d_states)
    _store_mlp_grads(grads, "input_mlp", in_grads, params.input_mlp)
    d_atom = np.zeros_like(params.atom_embed)
    np.add.at(d_atom, tape.species, d_x[:, : cfg.atom_embed_dim])
    grads["atom_embed"] = d_atom
    return grads


# ---------------------------------------------------------------------------
# Flat parameter dict and checkpoint format


def _mlp_entries(prefix: str, mlp: Mlp):
    for k in range(mlp.num_layers):
        yield f"{prefix}.w{k}", mlp.weights[k]
        yield f"{prefix}.b{k}", mlp.biases[k]


def params_to_dict(params: DenoiserParams) -> dict:
    """Flatten to {name: array}; arrays are shared, not copied."""
    out = {"atom_embed": params.atom_embed, "order_embed": params.order_embed}
    out.update(_mlp_entries("input_mlp", params.input_mlp))
    for index, layer in enumerate(params.layers):
        out.update(_mlp_entries(f"layers.{index}.message", layer.message))
        out.update(_mlp_entries(f"layers.{index}.update", layer.update))
    out.update(_mlp_entries("readout_lattice", params.readout_lattice))
    out.update(_mlp_entries("readout_coord", params.readout_coord))
    return out


def _mlp_from_dict(flat: dict, prefix: str, sizes, activation: str) -> Mlp:
    weights = [flat[f"{prefix}.w{k}"] for k in range(len(sizes) - 1)]
    biases = [flat[f"{prefix}.b{k}"] for k in range(len(sizes) - 1)]
    return Mlp(tuple(sizes), weights, biases, activation)


def params_from_dict(config: DenoiserConfig, flat: dict) -> DenoiserParams:
    h, act = config.hidden_dim, config.activation
    layers = [
        LayerParams(
            message=_mlp_from_dict(flat, f"layers.{i}.message", (config.message_input_dim, h, h), act),
            update=_mlp_from_dict(flat, f"layers.{i}.update", (2 * h, h, h), act),
        )
        for i in range(config.num_layers)
    ]
    return DenoiserParams(
        config,
        flat["atom_embed"],
        flat["order_embed"],
        _mlp_from_dict(flat, "input_mlp", (config.atom_embed_dim + config.time_embed_dim, h, h), act),
        layers,
        _mlp_from_dict(flat, "readout_lattice", (h, h, 9), act),
        _mlp_from_dict(flat, "readout_coord", (h, h, 3), act),
    )


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: DenoiserParams, extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint: architecture header + named arrays."""
    import json
    from dataclasses import asdict

    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "crysdiff-denoiser",
        "config": asdict(params.config),
        "extra": extra or {},
        "arrays": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params_to_dict(params).items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Read a checkpoint; returns (DenoiserParams, extra dict)."""
    import json

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION or doc.get("kind") != "crysdiff-denoiser":
        raise ConfigError(f"{path}: not a crysdiff denoiser checkpoint")
    config = DenoiserConfig(**doc["config"])
    flat = {
        name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in doc["arrays"].items()
    }
    return params_from_dict(config, flat), doc.get("extra", {})

"""Dense-network substrate: MLPs with hand-written reverse-mode gradients.

Everything is double precision and purely functional: forward passes return
an explicit tape, backward passes consume it, and the Adam update returns new
parameter/state values.  Parameters travel as flat ``{name: array}`` dicts so
the optimizer and the gradient checker stay generic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ShapeError, TapeMismatchError


def _silu(z):
    return z * expit(z)


def _silu_grad(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


_ACTIVATIONS = {
    "silu": (_silu, _silu_grad),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class Mlp:
    """Fully connected network; weights[k] has shape (layer_sizes[k+1], layer_sizes[k]).

    Hidden layers apply `activation`; the final layer is affine.
    """

    layer_sizes: tuple
    weights: list
    biases: list
    activation: str = "silu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != expected:
                raise ShapeError(f"weights[{k}] has shape {w.shape}, expected {expected}")
            if b.shape != (self.layer_sizes[k + 1],):
                raise ShapeError(f"biases[{k}] has shape {b.shape}, expected ({self.layer_sizes[k + 1]},)")

    @property
    def num_layers(self) -> int:
        return len(self.weights)


@dataclass
class GradTape:
    """Cached forward activations: inputs to each affine layer and hidden pre-activations."""

    layer_sizes: tuple
    activation: str
    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)


@dataclass
class MlpGrads:
    weights: list
    biases: list


def init_params(layer_sizes, seed, activation: str = "silu") -> Mlp:
    """Glorot-uniform weights, zero biases; deterministic under a fixed seed."""
    if len(layer_sizes) < 2:
        raise ConfigError("layer_sizes must name at least input and output widths")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(layer_sizes), weights, biases, activation)


def forward_with_tape(mlp: Mlp, x):
    """Forward pass over a batch (B, d_in) or a single vector (d_in,).

    Returns (output, tape); the tape feeds mlp_backward.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != mlp.layer_sizes[0]:
        raise ShapeError(
            f"input width {batch.shape[1]} does not match layer_sizes[0]={mlp.layer_sizes[0]}"
        )
    act, _ = _ACTIVATIONS[mlp.activation]
    tape = GradTape(mlp.layer_sizes, mlp.activation)
    a = batch
    last = mlp.num_layers - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        tape.inputs.append(a)
        z = a @ w.T + b
        if k < last:
            tape.preacts.append(z)
            a = act(z)
        else:
            a = z
    return (a[0] if single else a), tape


def mlp_forward(mlp: Mlp, x):
    """Forward pass without keeping a tape."""
    y, _ = forward_with_tape(mlp, x)
    return y


def mlp_backward(mlp: Mlp, tape: GradTape, output_grad):
    """Exact reverse-mode gradients of the taped forward pass.

    Returns (MlpGrads, input_grad); `output_grad` must match the forward
    output shape (vector or batch).
    """
    if tape.layer_sizes != mlp.layer_sizes or tape.activation != mlp.activation:
        raise TapeMismatchError("tape does not match this network's architecture")
    if len(tape.inputs) != mlp.num_layers:
        raise TapeMismatchError("tape layer count does not match this network")
    g = np.asarray(output_grad, dtype=float)
    single = g.ndim == 1
    g = g[None, :] if single else g
    if g.shape != (tape.inputs[0].shape[0], mlp.layer_sizes[-1]):
        raise TapeMismatchError("output_grad shape does not match the taped forward pass")
    _, act_grad = _ACTIVATIONS[mlp.activation]
    d_weights = [None] * mlp.num_layers
    d_biases = [None] * mlp.num_layers
    for k in range(mlp.num_layers - 1, -1, -1):
        if k < mlp.num_layers - 1:
            g = g * act_grad(tape.preacts[k])
        d_weights[k] = g.T @ tape.inputs[k]
        d_biases[k] = g.sum(axis=0)
        g = g @ mlp.weights[k]
    return MlpGrads(d_weights, d_biases), (g[0] if single else g)


# ---------------------------------------------------------------------------
# Flat parameter dictionaries


def zeros_like_params(params: dict) -> dict:
    return {name: np.zeros_like(value) for name, value in params.items()}


def add_scaled(accumulator: dict, grads: dict, scale: float = 1.0) -> dict:
    """accumulator += scale * grads, in place; returns the accumulator."""
    for name, value in grads.items():
        accumulator[name] += scale * value
    return accumulator


def scale_params(params: dict, scale: float) -> dict:
    return {name: value * scale for name, value in params.items()}


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict


def adam_init(params: dict) -> AdamState:
    return AdamState(0, zeros_like_params(params), zeros_like_params(params))


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One adaptive-moment update with bias correction; returns (params, state)."""
    if set(params) != set(grads):
        raise ShapeError("params and grads hold different names")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        if params[name].shape != grads[name].shape:
            raise ShapeError(f"gradient shape mismatch for {name!r}")
        m = beta1 * state.m[name] + (1.0 - beta1) * grads[name]
        v = beta2 * state.v[name] + (1.0 - beta2) * grads[name] ** 2
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(t, new_m, new_v)


def finite_diff_check(loss_fn, params: dict, analytic_grads: dict, probe_count: int = 50,
                      h: float = 1e-5, rng=None) -> float:
    """Max relative error between analytic gradients and central differences.

    Probes `probe_count` randomly chosen scalar parameters; relative error is
    |analytic - numeric| / max(|numeric|, 1e-8).
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    names = sorted(params)
    sizes = np.array([params[name].size for name in names])
    total = int(sizes.sum())
    count = min(probe_count, total)
    flat_choices = rng.choice(total, size=count, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    max_rel = 0.0
    for flat in flat_choices:
        which = int(np.searchsorted(offsets, flat, side="right")) - 1
        name, local = names[which], int(flat - offsets[which])
        idx = np.unravel_index(local, params[name].shape)

        def perturbed(delta):
            bumped = dict(params)
            arr = params[name].copy()
            arr[idx] += delta
            bumped[name] = arr
            return loss_fn(bumped)

        numeric = (perturbed(h) - perturbed(-h)) / (2.0 * h)
        analytic = float(analytic_grads[name][idx])
        rel = abs(analytic - numeric) / max(abs(numeric), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel

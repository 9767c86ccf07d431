"""Tests for the MLP substrate: forward, backward, init, Adam, gradient checks."""

import numpy as np
import pytest
from scipy.special import expit

from crysdiff.errors import ConfigError, ShapeError, TapeMismatchError
from crysdiff.nn import (
    AdamState,
    Mlp,
    adam_init,
    adam_step,
    finite_diff_check,
    forward_with_tape,
    init_params,
    mlp_backward,
    mlp_forward,
)


def reference_forward(mlp, x):
    """Straightforward loop re-implementation used as an oracle."""
    a = np.asarray(x, dtype=float)
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = w @ a + b
        if k < len(mlp.weights) - 1:
            z = z * expit(z)  # silu
        a = z
    return a


class TestForward:
    def test_zero_parameters_give_zero(self):
        mlp = Mlp((3, 4, 2), [np.zeros((4, 3)), np.zeros((2, 4))], [np.zeros(4), np.zeros(2)])
        np.testing.assert_array_equal(mlp_forward(mlp, np.ones(3)), np.zeros(2))

    def test_single_layer_identity_passthrough(self):
        mlp = Mlp((3, 3), [np.eye(3)], [np.zeros(3)])
        x = np.array([0.3, -1.2, 2.0])
        np.testing.assert_array_equal(mlp_forward(mlp, x), x)

    def test_matches_reference_implementation(self):
        mlp = init_params((5, 7, 4), seed=42)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.standard_normal(5)
            np.testing.assert_allclose(mlp_forward(mlp, x), reference_forward(mlp, x), atol=1e-12)

    def test_batched_equals_per_row(self):
        mlp = init_params((4, 6, 3), seed=0)
        rng = np.random.default_rng(2)
        batch = rng.standard_normal((8, 4))
        out, _ = forward_with_tape(mlp, batch)
        for row in range(8):
            np.testing.assert_allclose(out[row], mlp_forward(mlp, batch[row]), atol=1e-14)

    def test_shape_mismatch(self):
        mlp = init_params((4, 3), seed=0)
        with pytest.raises(ShapeError):
            mlp_forward(mlp, np.ones(5))

    def test_unknown_activation(self):
        with pytest.raises(ConfigError):
            Mlp((2, 2), [np.eye(2)], [np.zeros(2)], activation="softplus")


class TestBackward:
    def test_zero_output_grad(self):
        mlp = init_params((3, 5, 2), seed=3)
        _, tape = forward_with_tape(mlp, np.ones(3))
        grads, dx = mlp_backward(mlp, tape, np.zeros(2))
        assert all(np.all(w == 0) for w in grads.weights)
        assert all(np.all(b == 0) for b in grads.biases)
        np.testing.assert_array_equal(dx, np.zeros(3))

    def test_linear_single_layer_chain_rule(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((2, 3))
        mlp = Mlp((3, 2), [w], [np.zeros(2)])
        x = rng.standard_normal(3)
        _, tape = forward_with_tape(mlp, x)
        g = rng.standard_normal(2)
        grads, dx = mlp_backward(mlp, tape, g)
        np.testing.assert_allclose(dx, w.T @ g, atol=1e-14)
        np.testing.assert_allclose(grads.weights[0], np.outer(g, x), atol=1e-14)

    def test_against_finite_differences(self):
        mlp = init_params((4, 8, 8, 3), seed=5)
        rng = np.random.default_rng(6)
        x = rng.standard_normal(4)
        target = rng.standard_normal(3)

        def loss_fn(flat):
            probe = Mlp(
                mlp.layer_sizes,
                [flat[f"w{k}"] for k in range(3)],
                [flat[f"b{k}"] for k in range(3)],
            )
            return float(np.sum((mlp_forward(probe, x) - target) ** 2))

        y, tape = forward_with_tape(mlp, x)
        grads, _ = mlp_backward(mlp, tape, 2.0 * (y - target))
        flat = {f"w{k}": mlp.weights[k] for k in range(3)}
        flat.update({f"b{k}": mlp.biases[k] for k in range(3)})
        analytic = {f"w{k}": grads.weights[k] for k in range(3)}
        analytic.update({f"b{k}": grads.biases[k] for k in range(3)})
        assert finite_diff_check(loss_fn, flat, analytic, probe_count=60, rng=7) < 1e-4

    def test_stale_tape_rejected(self):
        mlp = init_params((3, 4, 2), seed=8)
        other = init_params((3, 5, 2), seed=8)
        _, tape = forward_with_tape(other, np.ones(3))
        with pytest.raises(TapeMismatchError):
            mlp_backward(mlp, tape, np.ones(2))

    def test_wrong_grad_shape_rejected(self):
        mlp = init_params((3, 4, 2), seed=9)
        _, tape = forward_with_tape(mlp, np.ones(3))
        with pytest.raises(TapeMismatchError):
            mlp_backward(mlp, tape, np.ones(3))


class TestFiniteDiffCheck:
    def test_quadratic_with_known_gradient(self):
        params = {"x": np.array([1.0, 2.0, -0.5])}

        def loss_fn(p):
            return float(np.sum(p["x"] ** 2))

        analytic = {"x": 2.0 * params["x"]}
        assert finite_diff_check(loss_fn, params, analytic, probe_count=3, rng=0) < 1e-7

    def test_constant_function(self):
        params = {"x": np.ones(4)}
        analytic = {"x": np.zeros(4)}
        assert finite_diff_check(lambda p: 1.5, params, analytic, probe_count=4, rng=0) < 1e-7

    def test_detects_wrong_gradient(self):
        params = {"x": np.array([1.0, 2.0])}
        wrong = {"x": np.array([5.0, -3.0])}
        err = finite_diff_check(lambda p: float(np.sum(p["x"] ** 2)), params, wrong,
                                probe_count=2, rng=0)
        assert err > 0.5


class TestInit:
    def test_deterministic(self):
        a = init_params((6, 5, 4), seed=11)
        b = init_params((6, 5, 4), seed=11)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_biases_zero(self):
        mlp = init_params((6, 5, 4), seed=12)
        assert all(np.all(b == 0) for b in mlp.biases)

    def test_weight_moments(self):
        mlp = init_params((1000, 1000), seed=13)
        bound = np.sqrt(6.0 / 2000)
        std = mlp.weights[0].std()
        assert abs(std - bound / np.sqrt(3)) < 0.05 * bound / np.sqrt(3)
        assert np.abs(mlp.weights[0]).max() <= bound

    def test_too_few_layers(self):
        with pytest.raises(ConfigError):
            init_params((4,), seed=0)


class TestAdam:
    def test_zero_gradients_leave_parameters(self):
        params = {"w": np.array([1.0, -2.0]), "b": np.array([[0.5]])}
        grads = {"w": np.zeros(2), "b": np.zeros((1, 1))}
        new_params, state = adam_step(params, grads, adam_init(params), lr=0.1)
        np.testing.assert_array_equal(new_params["w"], params["w"])
        np.testing.assert_array_equal(new_params["b"], params["b"])
        assert state.step == 1

    def test_first_step_closed_form(self):
        params = {"x": np.array([1.0, 1.0, 1.0])}
        grads = {"x": np.array([0.3, -2.0, 10.0])}
        lr, eps = 0.01, 1e-8
        new_params, _ = adam_step(params, grads, adam_init(params), lr=lr, eps=eps)
        g = grads["x"]
        expected = params["x"] - lr * g / (np.abs(g) + eps)
        np.testing.assert_allclose(new_params["x"], expected, atol=1e-12)

    def test_minimizes_quadratic(self):
        params = {"x": np.array([5.0])}
        state = adam_init(params)
        for _ in range(2000):
            grads = {"x": 2.0 * params["x"]}
            params, state = adam_step(params, grads, state, lr=1e-2)
        assert abs(params["x"][0]) < 1e-2

    def test_iteration_order_independent(self):
        rng = np.random.default_rng(14)
        params_ab = {"a": rng.standard_normal(3), "b": rng.standard_normal(2)}
        grads_ab = {"a": rng.standard_normal(3), "b": rng.standard_normal(2)}
        params_ba = {"b": params_ab["b"].copy(), "a": params_ab["a"].copy()}
        grads_ba = {"b": grads_ab["b"].copy(), "a": grads_ab["a"].copy()}
        out_ab, _ = adam_step(params_ab, grads_ab, adam_init(params_ab), lr=0.05)
        out_ba, _ = adam_step(params_ba, grads_ba, adam_init(params_ba), lr=0.05)
        np.testing.assert_array_equal(out_ab["a"], out_ba["a"])
        np.testing.assert_array_equal(out_ab["b"], out_ba["b"])

    def test_name_mismatch_rejected(self):
        params = {"x": np.ones(2)}
        with pytest.raises(ShapeError):
            adam_step(params, {"y": np.ones(2)}, adam_init(params), lr=0.1)

"""Tests for the lattice DDPM."""

import numpy as np
import pytest

from crysdiff.errors import ConfigError, DomainError, ShapeError
from crysdiff.lattice_diffusion import (
    BetaSchedule,
    forward_sample_L,
    loss_L,
    make_cosine_schedule,
    posterior_variance,
    reverse_mean,
)


class TestCosineSchedule:
    def test_near_one_at_start(self):
        sched = make_cosine_schedule(1000)
        assert sched.alpha_bar(1) > 0.999

    def test_small_at_end(self):
        sched = make_cosine_schedule(1000)
        assert sched.alpha_bar(1000) < 0.01

    def test_alpha_bars_strictly_decreasing(self):
        sched = make_cosine_schedule(500)
        assert np.all(np.diff(sched.alpha_bars) < 0)

    def test_cumulative_product_invariant(self):
        sched = make_cosine_schedule(300)
        np.testing.assert_allclose(
            sched.alpha_bars, np.cumprod(1.0 - sched.betas), rtol=1e-12
        )

    def test_betas_clipped_to_open_interval(self):
        sched = make_cosine_schedule(50)
        assert np.all(sched.betas > 0) and np.all(sched.betas <= 0.999)

    def test_small_T_still_valid(self):
        sched = make_cosine_schedule(2)
        assert sched.alpha_bar(2) < 0.01

    def test_too_small_T(self):
        with pytest.raises(ConfigError):
            make_cosine_schedule(1)

    def test_alpha_bar_zero_is_one(self):
        assert make_cosine_schedule(10).alpha_bar(0) == 1.0

    def test_t_out_of_range(self):
        with pytest.raises(DomainError):
            make_cosine_schedule(10).beta(11)

    def test_json_round_trip(self):
        sched = make_cosine_schedule(40)
        back = BetaSchedule.from_json_dict(sched.to_json_dict())
        np.testing.assert_allclose(back.alpha_bars, sched.alpha_bars, rtol=1e-15)


class TestForwardSampleL:
    def test_moments(self):
        sched = make_cosine_schedule(100)
        lattice0 = np.diag([4.0, 4.0, 4.0])
        rng = np.random.default_rng(20)
        t = 60
        draws = np.stack([forward_sample_L(lattice0, t, sched, rng)[0] for _ in range(20_000)])
        abar = sched.alpha_bar(t)
        se_mean = np.sqrt(1.0 - abar) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - np.sqrt(abar) * lattice0) < 4 * se_mean)
        var = draws.var(axis=0)
        se_var = (1.0 - abar) * np.sqrt(2.0 / (draws.shape[0] - 1))
        assert np.all(np.abs(var - (1.0 - abar)) < 4 * se_var)

    def test_o3_pushforward_linearity(self):
        sched = make_cosine_schedule(100)
        rng = np.random.default_rng(21)
        lattice0 = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        eps = rng.standard_normal((3, 3))
        t = 40
        abar = sched.alpha_bar(t)
        direct = np.sqrt(abar) * (q @ lattice0) + np.sqrt(1 - abar) * (q @ eps)
        rotated = q @ (np.sqrt(abar) * lattice0 + np.sqrt(1 - abar) * eps)
        np.testing.assert_allclose(direct, rotated, atol=1e-13)

    def test_reproducible(self):
        sched = make_cosine_schedule(100)
        a = forward_sample_L(np.eye(3), 10, sched, np.random.default_rng(3))
        b = forward_sample_L(np.eye(3), 10, sched, np.random.default_rng(3))
        np.testing.assert_array_equal(a[0], b[0])


class TestReverseMean:
    def test_zero_noise_estimate(self):
        sched = make_cosine_schedule(100)
        lattice_t = np.diag([1.0, 2.0, 3.0])
        t = 30
        expected = lattice_t / np.sqrt(sched.alpha(t))
        np.testing.assert_allclose(reverse_mean(lattice_t, np.zeros((3, 3)), t, sched), expected)

    def test_formula_against_independent_evaluation(self):
        sched = make_cosine_schedule(200)
        rng = np.random.default_rng(22)
        for _ in range(20):
            t = int(rng.integers(1, 201))
            lattice_t = rng.standard_normal((3, 3))
            eps_hat = rng.standard_normal((3, 3))
            beta = sched.betas[t - 1]
            abar = sched.alpha_bars[t - 1]
            expected = np.empty((3, 3))
            for i in range(3):
                for j in range(3):
                    expected[i, j] = (
                        lattice_t[i, j] - beta / np.sqrt(1 - abar) * eps_hat[i, j]
                    ) / np.sqrt(1 - beta)
            np.testing.assert_allclose(reverse_mean(lattice_t, eps_hat, t, sched), expected, atol=1e-14)

    def test_posterior_mean_consistency_with_oracle_noise(self):
        # with eps_hat equal to the true noise, the reverse mean must match the
        # closed-form posterior mean of q(L_{t-1} | L_t, L_0)
        sched = make_cosine_schedule(100)
        rng = np.random.default_rng(23)
        lattice0 = rng.standard_normal((3, 3)) + 4 * np.eye(3)
        for t in (1, 5, 50, 100):
            eps = rng.standard_normal((3, 3))
            abar = sched.alpha_bar(t)
            abar_prev = sched.alpha_bar(t - 1)
            beta = sched.beta(t)
            alpha = sched.alpha(t)
            lattice_t = np.sqrt(abar) * lattice0 + np.sqrt(1 - abar) * eps
            posterior = (
                np.sqrt(abar_prev) * beta * lattice0
                + np.sqrt(alpha) * (1 - abar_prev) * lattice_t
            ) / (1 - abar)
            np.testing.assert_allclose(reverse_mean(lattice_t, eps, t, sched), posterior, atol=1e-10)

    def test_posterior_variance_zero_at_first_step(self):
        sched = make_cosine_schedule(100)
        assert posterior_variance(1, sched) == 0.0
        assert posterior_variance(2, sched) > 0.0


class TestLossL:
    def test_exact_match(self):
        eps = np.random.default_rng(24).standard_normal((3, 3))
        assert loss_L(eps, eps) == 0.0

    def test_all_ones_difference(self):
        assert loss_L(np.ones((3, 3)), np.zeros((3, 3))) == pytest.approx(9.0)

    def test_random_against_summation_oracle(self):
        rng = np.random.default_rng(25)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        expected = sum((a[i, j] - b[i, j]) ** 2 for i in range(3) for j in range(3))
        assert loss_L(a, b) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            loss_L(np.zeros((3, 3)), np.zeros((3, 2)))

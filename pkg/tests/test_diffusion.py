import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwdiff.diffusion import (
    AnalyticGaussianWorld,
    GuidanceConfig,
    combine_scores_lambda,
    default_schedule,
    diffusion_loss,
    forward_sample,
    guided_noise_prediction,
    make_linear_schedule,
    reverse_step,
    sample_terminal,
    score_from_noise,
    trajectory_rng,
)
from uwdiff.errors import ParameterError, ShapeMismatchError


class TestSchedule:
    def test_reference_endpoints(self):
        sched = make_linear_schedule(2000, 1e-6, 1e-2)
        assert sched.beta_at(1) == pytest.approx(1e-6, rel=0, abs=0)
        assert sched.beta_at(2000) == pytest.approx(1e-2, rel=0, abs=0)

    def test_single_step(self):
        sched = make_linear_schedule(1, 0.3, 0.3)
        assert sched.alpha_bar_at(1) == pytest.approx(0.7)

    def test_alpha_bar_strictly_decreasing(self):
        for sched in (default_schedule(200), make_linear_schedule(50, 1e-4, 0.05)):
            assert np.all(np.diff(sched.alpha_bar) < 0)
            assert 0 < sched.alpha_bar[-1] < sched.alpha_bar[0] < 1

    def test_default_schedule_preserves_terminal_alpha_bar(self):
        reference = make_linear_schedule(2000, 1e-6, 1e-2)
        desk = default_schedule(200)
        # endpoints scale like 2000/T, so the cumulative products stay close
        assert math.log(desk.alpha_bar[-1]) == pytest.approx(
            math.log(reference.alpha_bar[-1]), rel=0.05
        )

    def test_invalid_ranges(self):
        with pytest.raises(ParameterError):
            make_linear_schedule(0, 1e-4, 1e-2)
        with pytest.raises(ParameterError):
            make_linear_schedule(10, 0.0, 1e-2)
        with pytest.raises(ParameterError):
            make_linear_schedule(10, 0.2, 0.1)
        with pytest.raises(ParameterError):
            make_linear_schedule(10, 0.5, 1.0)

    def test_step_out_of_range(self):
        sched = make_linear_schedule(10, 1e-4, 0.05)
        with pytest.raises(ParameterError):
            sched.alpha_bar_at(0)
        with pytest.raises(ParameterError):
            sched.alpha_bar_at(11)

    def test_default_schedule_needs_enough_steps(self):
        # endpoint rescaling by 2000/T pushes beta_end past 1 for tiny T
        with pytest.raises(ParameterError):
            default_schedule(10)


class TestForwardSample:
    def test_zero_noise_branch(self, rng):
        sched = default_schedule(100)
        x0 = rng.standard_normal((4, 4))
        x_t = forward_sample(x0, 60, np.zeros_like(x0), sched)
        assert np.allclose(x_t, math.sqrt(sched.alpha_bar_at(60)) * x0)

    def test_early_step_stays_near_x0(self, rng):
        sched = default_schedule(200)
        x0 = rng.standard_normal(8)
        eps = rng.standard_normal(8)
        x_1 = forward_sample(x0, 1, eps, sched)
        ab = sched.alpha_bar_at(1)
        bound = math.sqrt(1 - ab) * np.linalg.norm(eps) + (1 - math.sqrt(ab)) * np.linalg.norm(x0)
        assert np.linalg.norm(x_1 - x0) <= bound + 1e-12

    def test_marginal_matches_closed_form(self):
        sched = default_schedule(200)
        n = 100_000
        gen = trajectory_rng(7, 0)
        x0, t = 0.4, 120
        x_t = forward_sample(np.full(n, x0), t, gen.standard_normal(n), sched)
        ab = sched.alpha_bar_at(t)
        want_mean, want_var = math.sqrt(ab) * x0, 1 - ab
        assert abs(x_t.mean() - want_mean) < 3 * math.sqrt(want_var / n)
        assert abs(x_t.var() - want_var) < 3 * want_var * math.sqrt(2 / (n - 1))

    def test_shape_mismatch(self):
        sched = make_linear_schedule(10, 1e-4, 0.05)
        with pytest.raises(ShapeMismatchError):
            forward_sample(np.zeros(3), 5, np.zeros(4), sched)


class TestScoreFromNoise:
    def test_zero_and_linearity(self, rng):
        sched = default_schedule(50)
        assert np.allclose(score_from_noise(np.zeros(5), 10, sched), 0.0)
        eps = rng.standard_normal(5)
        assert np.allclose(
            score_from_noise(2 * eps, 10, sched), 2 * score_from_noise(eps, 10, sched)
        )

    def test_matches_analytic_score(self, rng):
        sched = default_schedule(200)
        world = AnalyticGaussianWorld(mu0=0.5, var0=2.0, var_y=1.0)
        for t in (1, 77, 200):
            x = rng.standard_normal(32)
            eps_hat = world.exact_noise_prediction(x, t, sched)
            assert np.allclose(
                score_from_noise(eps_hat, t, sched), world.exact_score(x, t, sched), atol=1e-9
            )


class TestGuidanceAlgebra:
    def test_lambda_endpoints(self, rng):
        base, g1, g2 = rng.standard_normal((3, 6))
        assert np.allclose(combine_scores_lambda(base, g1, g2, 1.0), base + g1)
        assert np.allclose(combine_scores_lambda(base, g1, g2, 0.0), base + g2)
        assert np.allclose(
            combine_scores_lambda(base, g1, g2, 0.5), base + 0.5 * (g1 + g2)
        )

    def test_zero_gradients_collapse(self, rng):
        sched = default_schedule(60)
        eps = rng.standard_normal(4)
        zero = np.zeros(4)
        for cfg in (
            GuidanceConfig(mode="lambda_blend", lam=0.3),
            GuidanceConfig(mode="gamma_pair", gamma1=0.0, gamma2=0.0),
        ):
            assert np.allclose(guided_noise_prediction(eps, zero, zero, 30, sched, cfg), eps)

    def test_gamma_pair_weighting(self, rng):
        sched = default_schedule(60)
        eps, g1, g2 = rng.standard_normal((3, 4))
        cfg = GuidanceConfig(mode="gamma_pair", gamma1=0.7, gamma2=1.9)
        root = math.sqrt(1 - sched.alpha_bar_at(25))
        want = eps - 0.7 * root * g1 - 1.9 * root * g2
        assert np.allclose(guided_noise_prediction(eps, g1, g2, 25, sched, cfg), want)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 1), st.integers(1, 200), st.integers(0, 2**32 - 1))
    def test_noise_space_equals_score_space(self, lam, t, seed):
        sched = default_schedule(200)
        gen = np.random.default_rng(seed)
        eps_theta, g1, g2 = gen.standard_normal((3, 5))
        cfg = GuidanceConfig(mode="lambda_blend", lam=lam)
        via_noise = score_from_noise(
            guided_noise_prediction(eps_theta, g1, g2, t, sched, cfg), t, sched
        )
        direct = combine_scores_lambda(score_from_noise(eps_theta, t, sched), g1, g2, lam)
        assert np.max(np.abs(via_noise - direct)) < 1e-12

    def test_invalid_configs(self):
        with pytest.raises(ParameterError):
            GuidanceConfig(mode="bogus")
        with pytest.raises(ParameterError):
            GuidanceConfig(mode="lambda_blend", lam=1.5)
        with pytest.raises(ParameterError):
            GuidanceConfig(mode="gamma_pair", gamma1=-0.1)


class TestReverseStep:
    def test_terminal_step_deterministic(self, rng):
        sched = default_schedule(30)
        x = rng.standard_normal(6)
        eps = rng.standard_normal(6)
        outs = {reverse_step(x, eps, 1, sched, trajectory_rng(0, i)).tobytes() for i in range(3)}
        assert len(outs) == 1

    def test_posterior_variance_smaller_than_beta(self, rng):
        sched = default_schedule(100)
        x = np.zeros(200_000)
        eps = np.zeros_like(x)
        t = 50
        spread_beta = reverse_step(x, eps, t, sched, trajectory_rng(1, 0), variance="beta").std()
        spread_post = reverse_step(
            x, eps, t, sched, trajectory_rng(1, 0), variance="posterior"
        ).std()
        assert spread_post < spread_beta

    def test_unguided_sampler_recovers_prior(self):
        sched = default_schedule(200)
        world = AnalyticGaussianWorld(mu0=0.0, var0=1.0, var_y=1.0)
        n = 4000
        samples = sample_terminal(world, sched, n, trajectory_rng(3, 0))
        assert abs(samples.mean()) < 3 / math.sqrt(n)
        assert abs(samples.var() - 1.0) < 3 * math.sqrt(2 / (n - 1))

    def test_guided_sampler_recovers_posterior(self):
        sched = default_schedule(200)
        world = AnalyticGaussianWorld(mu0=0.0, var0=1.0, var_y=0.5)
        n = 4000
        samples = sample_terminal(
            world, sched, n, trajectory_rng(4, 0), observations=(2.0,),
            cfg=GuidanceConfig(mode="lambda_blend", lam=1.0),
        )
        mean, var = world.posterior(2.0)
        assert abs(samples.mean() - mean) < 3 * math.sqrt(var / n)
        assert abs(samples.var() - var) < 3 * var * math.sqrt(2 / (n - 1))


class TestDiffusionLoss:
    def test_perfect_prediction(self, rng):
        eps = rng.standard_normal((3, 3))
        assert diffusion_loss(eps, eps) == 0.0

    def test_unit_offset(self):
        assert diffusion_loss(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(1.0)

    def test_scalar_loop_oracle(self, rng):
        eps = rng.standard_normal(40)
        eps_hat = rng.standard_normal(40)
        manual = sum((a - b) ** 2 for a, b in zip(eps.tolist(), eps_hat.tolist())) / 40
        assert diffusion_loss(eps, eps_hat) == pytest.approx(manual, abs=1e-12)


class TestAnalyticWorld:
    def test_posterior_formula(self):
        world = AnalyticGaussianWorld(mu0=0.0, var0=1.0, var_y=0.5)
        mean, var = world.posterior(2.0)
        assert mean == pytest.approx(4 / 3)
        assert var == pytest.approx(1 / 3)

    def test_blended_posterior_interpolates(self):
        world = AnalyticGaussianWorld(mu0=0.0, var0=1.0, var_y=0.5)
        mean_mid, _ = world.blended_posterior(2.0, -2.0, 0.5)
        assert mean_mid == pytest.approx(0.0)

    def test_observation_score_is_exact_bayes(self, rng):
        # prior score + obs score must equal the posterior-marginal score
        sched = default_schedule(200)
        world = AnalyticGaussianWorld(mu0=0.3, var0=1.4, var_y=0.8)
        y = 1.1
        mean_post, var_post = world.posterior(y)
        posterior_world = AnalyticGaussianWorld(mu0=mean_post, var0=var_post, var_y=1.0)
        for t in (1, 50, 200):
            x = rng.standard_normal(16)
            combined = world.exact_score(x, t, sched) + world.observation_score(x, y, t, sched)
            assert np.allclose(combined, posterior_world.exact_score(x, t, sched), atol=1e-9)

"""Tests for the latent samplers."""

import numpy as np
import pytest

from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.metrics import gaussian_kl
from indm_core.models.config import PredictorKind, SamplerConfig, SamplerMethod
from indm_core.models.schedule import PriorKind
from indm_core.nn.score import GaussianScore, ZeroScore
from indm_core.services.sampling_service import (
    SamplingService,
    corrector_step_langevin,
    denoise,
    discretization_sensitivity,
    empirical_prior,
    final_sigma,
    predictor_step_em,
    predictor_step_reverse_diffusion,
    sample,
    sample_latent,
    stopping_time,
)


def assert_standard_normal(samples, atol):
    np.testing.assert_allclose(samples.mean(axis=0), 0.0, atol=atol)
    np.testing.assert_allclose(np.cov(samples.T), np.eye(2), atol=atol)


@pytest.mark.unit
class TestSamplers:
    """The exact score of N(0, I) data must reproduce N(0, I)."""

    @pytest.mark.slow
    def test_pc_sampler_recovers_gaussian(self, identity_flow, gaussian_score, vp_schedule, rng):
        config = SamplerConfig(n_steps=200, use_ema=False)
        samples = sample(identity_flow, gaussian_score, vp_schedule, config, 4000, rng)
        assert samples.shape == (4000, 2)
        assert_standard_normal(samples, atol=0.1)

    def test_ode_sampler_recovers_gaussian(self, identity_flow, gaussian_score, vp_schedule, rng):
        config = SamplerConfig(method=SamplerMethod.ODE, n_steps=1, ode_tol=1e-4)
        assert_standard_normal(sample(identity_flow, gaussian_score, vp_schedule, config, 4000, rng), atol=0.1)

    @pytest.mark.slow
    def test_ve_reverse_diffusion_with_corrector(self, identity_flow, ve_schedule, rng):
        score = GaussianScore(ve_schedule, dim=2)
        config = SamplerConfig(
            n_steps=300, predictor=PredictorKind.REVERSE_DIFFUSION, snr=0.16, use_ema=False
        )
        samples = sample(identity_flow, score, ve_schedule, config, 4000, rng)
        np.testing.assert_allclose(samples.var(axis=0), 1.0, atol=0.25)

    @pytest.mark.slow
    def test_pc_and_ode_samplers_agree(self, identity_flow, vp_schedule):
        score = GaussianScore(vp_schedule, dim=2, mean=[0.5, -0.5], var=0.25)
        pc = sample(
            identity_flow, score, vp_schedule, SamplerConfig(n_steps=500, use_ema=False),
            4000, np.random.default_rng(0),
        )
        ode = sample(
            identity_flow, score, vp_schedule,
            SamplerConfig(method=SamplerMethod.ODE, ode_tol=1e-5, use_ema=False),
            4000, np.random.default_rng(1),
        )
        np.testing.assert_allclose(pc.mean(axis=0), ode.mean(axis=0), atol=0.05)
        np.testing.assert_allclose(np.cov(pc.T), np.cov(ode.T), atol=0.04)
        np.testing.assert_allclose(ode.mean(axis=0), [0.5, -0.5], atol=0.05)

    @pytest.mark.parametrize("method", [SamplerMethod.PC, SamplerMethod.ODE])
    def test_deterministic_given_seed(self, random_flow, ve_schedule, method):
        score = GaussianScore(ve_schedule, dim=2)
        config = SamplerConfig(
            method=method, n_steps=10, predictor=PredictorKind.REVERSE_DIFFUSION,
            ode_tol=1e-3, use_ema=False,
        )
        first = sample(random_flow, score, ve_schedule, config, 16, np.random.default_rng(9))
        second = sample(random_flow, score, ve_schedule, config, 16, np.random.default_rng(9))
        np.testing.assert_array_equal(first, second)

    def test_inverse_flow_runs_once(self, random_flow, gaussian_score, vp_schedule, rng):
        sample(random_flow, gaussian_score, vp_schedule, SamplerConfig(n_steps=5), 10, rng)
        assert random_flow.inverse_calls == 1

    def test_zero_steps_returns_scaled_prior(self, gaussian_score, vp_schedule):
        config = SamplerConfig(n_steps=0, temperature=0.5)
        z = sample_latent(gaussian_score, vp_schedule, config, 6, np.random.default_rng(5))
        np.testing.assert_allclose(z, 0.5 * np.random.default_rng(5).standard_normal((6, 2)))

    def test_reverse_diffusion_on_vp_falls_back_to_em(self, gaussian_score, vp_schedule):
        em = SamplerConfig(n_steps=10, predictor=PredictorKind.EULER_MARUYAMA)
        rd = SamplerConfig(n_steps=10, predictor=PredictorKind.REVERSE_DIFFUSION)
        a = sample_latent(gaussian_score, vp_schedule, em, 8, np.random.default_rng(1))
        b = sample_latent(gaussian_score, vp_schedule, rd, 8, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_empirical_prior(self, identity_flow, vp_schedule, rng):
        prior = empirical_prior(identity_flow, vp_schedule, rng.standard_normal((30, 2)), rng)
        assert prior.kind == PriorKind.EMPIRICAL
        assert prior.bank.shape == (30, 2)
        config = SamplerConfig(n_steps=0, prior=prior)
        z = sample_latent(ZeroScore(2), vp_schedule, config, 5, rng)
        assert all(any(np.array_equal(row, b) for b in prior.bank) for row in z)

    def test_service_and_discretization_curve(self, identity_flow, gaussian_score, vp_schedule, rng):
        service = SamplingService(identity_flow, gaussian_score, vp_schedule, SamplerConfig(n_steps=5))
        assert service.sample(7, rng).shape == (7, 2)
        curve = discretization_sensitivity(
            identity_flow, gaussian_score, vp_schedule, [2, 8], rng.standard_normal((200, 2)), n=200
        )
        assert curve.step_counts == [2, 8]
        assert curve.values.shape == (2,)
        assert list(curve.to_frame().columns) == ["n_steps", "sliced-wasserstein"]


@pytest.mark.unit
class TestSteps:
    def test_em_step(self, gaussian_score, vp_schedule):
        z = np.array([[1.0, 2.0]])
        t, gamma = 0.5, 0.01
        beta = float(vp_schedule.beta(t))
        out = predictor_step_em(vp_schedule, gaussian_score, z, t, gamma, np.zeros_like(z))
        np.testing.assert_allclose(out, z - 0.5 * gamma * beta * z)
        with pytest.raises(InvalidParameterException):
            predictor_step_em(vp_schedule, gaussian_score, z, t, 0.0, np.zeros_like(z))

    def test_reverse_diffusion_step(self, ve_schedule):
        z = np.ones((3, 2))
        out = predictor_step_reverse_diffusion(ve_schedule, ZeroScore(2), z, 0.5, 1.0, np.ones_like(z))
        np.testing.assert_allclose(out, 1.0 + np.sqrt(0.75))
        with pytest.raises(InvalidParameterException):
            predictor_step_reverse_diffusion(ve_schedule, ZeroScore(2), z, 2.0, 1.0, z)

    def test_langevin_skips_zero_score(self, rng):
        z = rng.standard_normal((4, 2))
        out, skipped = corrector_step_langevin(ZeroScore(2), z, 0.5, 0.16, rng.standard_normal((4, 2)))
        assert skipped.all()
        np.testing.assert_array_equal(out, z)

    def test_langevin_step_size_uses_batch_norms(self, gaussian_score):
        z = np.array([[1.0, 0.0], [0.0, 3.0]])
        noise = np.array([[0.0, 2.0], [1.0, 0.0]])
        snr = 0.1
        out, skipped = corrector_step_langevin(gaussian_score, z, 0.5, snr, noise)
        assert not skipped.any()
        step = 2.0 * (snr * 1.5 / 2.0) ** 2
        np.testing.assert_allclose(out, z - step * z + np.sqrt(2.0 * step) * noise)

    def test_langevin_leaves_zero_score_rows(self, gaussian_score):
        z = np.array([[0.0, 0.0], [1.0, 1.0]])
        noise = np.ones_like(z)
        out, skipped = corrector_step_langevin(gaussian_score, z, 0.5, 0.1, noise)
        np.testing.assert_array_equal(skipped, [True, False])
        np.testing.assert_array_equal(out[0], [0.0, 0.0])
        step = 2.0 * (0.1 * np.sqrt(2.0) / np.sqrt(2.0)) ** 2
        np.testing.assert_allclose(out[1], 1.0 - step + np.sqrt(2.0 * step))

    def test_langevin_moves_toward_the_marginal(self, gaussian_score):
        t = 0.5
        std = np.sqrt(gaussian_score.marginal_var(t))
        target = std * np.random.default_rng(1).standard_normal((2000, 2))
        rng = np.random.default_rng(2)
        z = 2.0 * rng.standard_normal((2000, 2))
        kl = [gaussian_kl(z, target)]
        for _ in range(50):
            z, _ = corrector_step_langevin(gaussian_score, z, t, 0.16, rng.standard_normal(z.shape))
            kl.append(gaussian_kl(z, target))
        assert kl[-1] < 0.5 * kl[0]
        assert kl[-1] < kl[10]

    def test_denoise(self, gaussian_score, vp_schedule):
        z = np.array([[2.0, -1.0]])
        t = 0.2
        np.testing.assert_allclose(denoise(vp_schedule, gaussian_score, z, t), vp_schedule.mu(t) * z)


@pytest.mark.unit
class TestStoppingTime:
    def test_defaults_to_eps(self, vp_schedule):
        assert stopping_time(vp_schedule, SamplerConfig()) == vp_schedule.eps

    def test_vp_stopping_time_clipped_to_eps(self, vp_schedule):
        assert stopping_time(vp_schedule, SamplerConfig(stopping_time=0.0)) == vp_schedule.eps
        assert final_sigma(vp_schedule, SamplerConfig(stopping_time=0.0)) is None

    def test_stopping_sigma_on_ve(self, ve_schedule):
        config = SamplerConfig(stopping_sigma=0.1)
        assert stopping_time(ve_schedule, config) == pytest.approx(1.0 / 3.0)
        assert final_sigma(ve_schedule, config) is None

    def test_stopping_sigma_below_grid_floor(self, ve_schedule):
        config = SamplerConfig(stopping_sigma=1e-3)
        assert stopping_time(ve_schedule, config) == ve_schedule.eps
        assert final_sigma(ve_schedule, config) == 1e-3
        assert final_sigma(ve_schedule, SamplerConfig(stopping_sigma=0.0)) == 0.0

    def rd_latents(self, ve_schedule, **kwargs):
        score = GaussianScore(ve_schedule, dim=2)
        config = SamplerConfig(
            n_steps=20, predictor=PredictorKind.REVERSE_DIFFUSION, use_ema=False, **kwargs
        )
        return score, sample_latent(score, ve_schedule, config, 64, np.random.default_rng(11))

    def test_sub_floor_stopping_sigmas_differ(self, ve_schedule):
        """Both stop the grid at eps; only the last step's target noise level differs."""
        score, z_eps = self.rd_latents(ve_schedule, denoise_final=False)
        _, a = self.rd_latents(ve_schedule, stopping_sigma=1e-3)
        _, b = self.rd_latents(ve_schedule, stopping_sigma=1e-5)
        assert not np.array_equal(a, b)

        s = -z_eps / (1.0 + float(ve_schedule.sigma2(ve_schedule.eps)))
        sigma_eps = float(ve_schedule.sigma(ve_schedule.eps))
        np.testing.assert_allclose(a, z_eps + (sigma_eps**2 - 1e-6) * s, rtol=1e-10)
        np.testing.assert_allclose(b, z_eps + (sigma_eps**2 - 1e-10) * s, rtol=1e-10)

    def test_zero_stopping_sigma_is_full_denoise(self, ve_schedule):
        _, denoised = self.rd_latents(ve_schedule)
        _, stopped = self.rd_latents(ve_schedule, stopping_sigma=0.0, denoise_final=False)
        np.testing.assert_allclose(stopped, denoised, rtol=1e-10, atol=1e-14)

    def test_stopping_sigma_on_vp_raises(self, vp_schedule):
        with pytest.raises(InvalidParameterException):
            stopping_time(vp_schedule, SamplerConfig(stopping_sigma=0.1))

"""Tests for the probability-flow ODE and the likelihood service.

The oracle throughout is N(0, I) data with an identity flow and the exact
latent score: the probability-flow velocity vanishes, so every likelihood is
the closed-form Gaussian one.
"""

import numpy as np
import pytest

from indm_core.exceptions.indm_exceptions import NonFiniteException, SolverException
from indm_core.models.config import EvaluationConfig, ResidualVariance, StartConvention
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import GaussianScore, RotatedScore, ZeroScore
from indm_core.ode import integrate_probability_flow
from indm_core.sde import LOG_2PI
from indm_core.services.likelihood_service import (
    LikelihoodService,
    correction_sweep,
    evaluate,
    ode_loglikelihood,
    residual_term,
)


def gaussian_nll(x):
    return 0.5 * np.sum(x**2, axis=1) + LOG_2PI


class NanScore(ZeroScore):
    def __call__(self, z, t, use_ema=False):
        return super().__call__(z, t, use_ema) + np.nan


@pytest.mark.unit
class TestProbabilityFlow:
    def test_exact_score_leaves_latents_fixed(self, gaussian_score, vp_schedule, rng):
        z = rng.standard_normal((5, 2))
        times = np.linspace(vp_schedule.T, vp_schedule.eps, 5)
        solution = integrate_probability_flow(
            gaussian_score, vp_schedule, z, vp_schedule.T, vp_schedule.eps,
            t_eval=times, with_divergence=True,
        )
        np.testing.assert_allclose(solution.z_end, z, atol=1e-10)
        np.testing.assert_allclose(solution.div_integral, 0.0, atol=1e-10)
        assert solution.states.shape == (5, 5, 2)
        assert solution.nfev > 0

    def test_rotation_preserves_norms(self, gaussian_score, vp_schedule, rng):
        z = rng.standard_normal((5, 2))
        rotated = RotatedScore(gaussian_score, c=0.5)
        solution = integrate_probability_flow(
            rotated, vp_schedule, z, vp_schedule.eps, vp_schedule.T, rtol=1e-8, with_divergence=True
        )
        assert not np.allclose(solution.z_end, z)
        np.testing.assert_allclose(
            np.linalg.norm(solution.z_end, axis=1), np.linalg.norm(z, axis=1), rtol=1e-5
        )
        np.testing.assert_allclose(solution.div_integral, 0.0, atol=1e-10)

    def test_step_budget(self, vp_schedule, rng):
        with pytest.raises(SolverException):
            integrate_probability_flow(
                ZeroScore(2), vp_schedule, rng.standard_normal((3, 2)),
                vp_schedule.eps, vp_schedule.T, max_steps=1,
            )

    def test_non_finite_velocity(self, vp_schedule):
        with pytest.raises(NonFiniteException):
            integrate_probability_flow(
                NanScore(2), vp_schedule, np.zeros((2, 2)), vp_schedule.eps, vp_schedule.T
            )


@pytest.mark.unit
class TestOdeLikelihood:
    def test_gaussian_oracle_from_data(self, identity_flow, gaussian_score, vp_schedule, rng):
        x0 = rng.standard_normal((50, 2))
        logp = ode_loglikelihood(
            identity_flow, gaussian_score, vp_schedule, x0, StartConvention.X0
        )
        np.testing.assert_allclose(-logp, gaussian_nll(x0), atol=1e-6)

    def test_flow_logdet_is_added(self, gaussian_score, vp_schedule, rng):
        x0 = rng.standard_normal((10, 2))
        logp = ode_loglikelihood(
            FlowTransform.scaling(2, 0.5), gaussian_score, vp_schedule, x0, StartConvention.X0
        )
        expected = -gaussian_nll(0.5 * x0) + 2.0 * np.log(0.5)
        np.testing.assert_allclose(logp, expected, atol=1e-6)

    def test_stable_under_tighter_tolerance(self, identity_flow, vp_schedule):
        score = GaussianScore(vp_schedule, dim=2, mean=[0.5, 0.0], var=0.25)
        x0 = np.random.default_rng(0).standard_normal((50, 2))
        nll = {
            rtol: -ode_loglikelihood(
                identity_flow, score, vp_schedule, x0, StartConvention.X0, rtol=rtol
            )
            for rtol in (1e-4, 1e-5)
        }
        assert abs(np.mean(nll[1e-4]) - np.mean(nll[1e-5])) < 1e-3

    @pytest.mark.parametrize("variance", list(ResidualVariance))
    def test_residual_is_negligible_for_exact_score(
        self, identity_flow, gaussian_score, vp_schedule, rng, variance
    ):
        x0 = rng.standard_normal((100, 2))
        noise = rng.standard_normal((100, 2))
        residual = residual_term(identity_flow, gaussian_score, vp_schedule, x0, noise, variance)
        np.testing.assert_allclose(residual, 0.0, atol=0.01)


@pytest.mark.unit
class TestEvaluate:
    @pytest.mark.slow
    def test_gaussian_oracle(self, identity_flow, gaussian_score, vp_schedule, rng):
        x0 = rng.standard_normal((2000, 2))
        report = evaluate(
            identity_flow, gaussian_score, vp_schedule, x0, EvaluationConfig(n_t=2), rng
        )
        assert report.nll_uncorrected == pytest.approx(np.mean(gaussian_nll(x0)), abs=1e-6)
        assert report.nll_uncorrected == pytest.approx(1.0 + LOG_2PI, abs=0.15)
        assert abs(report.nelbo_without_residual - report.nll_uncorrected) < 0.02
        assert abs(report.nll_corrected - report.nll_uncorrected) < 0.01
        assert abs(report.gap) < 0.02
        assert report.metadata["nfev"] > 0
        assert report.per_sample_nll.shape == (2000,)

    @pytest.mark.parametrize("c", [0.25, 0.5])
    def test_non_conservative_score_opens_gap(self, identity_flow, gaussian_score, vp_schedule, rng, c):
        """A rotation keeps the ODE density but raises the bound by about c^2 int beta."""
        x0 = rng.standard_normal((500, 2))
        rotated = RotatedScore(gaussian_score, c=c)
        report = evaluate(identity_flow, rotated, vp_schedule, x0, EvaluationConfig(n_t=16), rng)
        assert report.nll_uncorrected == pytest.approx(np.mean(gaussian_nll(x0)), abs=1e-3)
        assert report.gap > 0.0
        expected = c**2 * float(vp_schedule.int_beta(vp_schedule.T))
        assert report.gap == pytest.approx(expected, rel=0.3)

    def test_report_keys(self, identity_flow, gaussian_score, vp_schedule, rng):
        report = evaluate(
            identity_flow, gaussian_score, vp_schedule, rng.standard_normal((20, 2)),
            EvaluationConfig(n_t=1), rng,
        )
        keys = report.key_values()
        for key in (
            "nll_corrected", "nll_uncorrected", "nelbo_with_residual",
            "nelbo_without_residual", "gap", "residual_term", "bpd_nll_corrected",
        ):
            assert np.isfinite(keys[key])
        assert keys["residual_variance"] == "sigma2/mu2"


@pytest.mark.unit
class TestCorrectionSweep:
    def test_columns_and_small_differences(self, identity_flow, gaussian_score, vp_schedule, rng):
        frame = correction_sweep(
            identity_flow, gaussian_score, vp_schedule, rng.standard_normal((200, 2)),
            [1e-5, 1e-3], rng=rng,
        )
        assert list(frame.columns) == ["eps", "nll_x_eps", "nll_x0", "difference"]
        np.testing.assert_allclose(frame["eps"], [1e-5, 1e-3])
        assert np.all(np.abs(frame["difference"]) < 0.01)

    @pytest.mark.slow
    def test_difference_grows_with_eps(self, identity_flow, vp_schedule):
        """N(0, v I) data: the expected difference is d sigma^2(eps) (1 - v) / (2 c(eps))."""
        score = GaussianScore(vp_schedule, dim=2, var=0.25)
        x0 = 0.5 * np.random.default_rng(0).standard_normal((2000, 2))
        eps_values = [0.05, 0.1, 0.2, 0.4]
        frame = correction_sweep(
            identity_flow, score, vp_schedule, x0, eps_values, rtol=1e-5,
            rng=np.random.default_rng(1),
        )
        difference = frame["difference"].to_numpy()
        assert np.all(difference > 0.0)
        assert np.all(np.diff(difference) > 0.0)
        sigma2 = float(vp_schedule.sigma2(0.4))
        expected = 2 * sigma2 * 0.75 / (2.0 * float(score.marginal_var(0.4)))
        assert difference[-1] == pytest.approx(expected, rel=0.15)

    def test_service_delegates(self, identity_flow, gaussian_score, vp_schedule, rng):
        service = LikelihoodService(identity_flow, gaussian_score, vp_schedule, EvaluationConfig())
        x0 = rng.standard_normal((10, 2))
        np.testing.assert_allclose(
            service.nll(x0, StartConvention.X0), gaussian_nll(x0), atol=1e-6
        )
        assert len(service.correction_sweep(x0, [1e-4], rng)) == 1

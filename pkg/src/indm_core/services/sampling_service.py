"""Sampling service: predictor-corrector and probability-flow ODE samplers on the latent space.

Samplers run entirely on latents and map the final batch to data space with
one call of the inverse flow.
"""

import dataclasses
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from indm_core.autodiff.tensor import no_grad
from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.metrics import sample_metric
from indm_core.models.config import MetricKind, PredictorKind, SamplerConfig, SamplerMethod
from indm_core.models.results import DiscretizationCurve
from indm_core.models.schedule import PriorKind, PriorSpec, SdeKind, SdeSchedule
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreFn
from indm_core.ode import integrate_probability_flow
from indm_core.sde import prior_sample

logger = logging.getLogger(__name__)


def _score_at(score: ScoreFn, z: np.ndarray, t: float, use_ema: bool) -> np.ndarray:
    with no_grad():
        return score(z, np.full(z.shape[0], t), use_ema=use_ema).data


def predictor_step_em(
    schedule: SdeSchedule,
    score: ScoreFn,
    z: np.ndarray,
    t: float,
    gamma: float,
    noise: np.ndarray,
    use_ema: bool = False,
) -> np.ndarray:
    """Euler-Maruyama step of the reverse SDE from t to t - gamma.

    ``z + gamma (beta z / 2 + g^2 s(z, t)) + g sqrt(gamma) noise``.
    """
    if gamma <= 0:
        raise InvalidParameterException(f"Step size must be positive, got {gamma}", "gamma")
    s = _score_at(score, z, t, use_ema)
    beta = float(schedule.beta(t))
    g2 = float(schedule.g2(t))
    return z + gamma * (0.5 * beta * z + g2 * s) + np.sqrt(g2 * gamma) * noise


def predictor_step_reverse_diffusion(
    schedule: SdeSchedule,
    score: ScoreFn,
    z: np.ndarray,
    sigma_lo: float,
    sigma_hi: float,
    noise: np.ndarray,
    use_ema: bool = False,
) -> np.ndarray:
    """Reverse-diffusion step of a VE chain from sigma_hi down to sigma_lo.

    ``z + (sigma_hi^2 - sigma_lo^2) s + sqrt(sigma_hi^2 - sigma_lo^2) noise``
    with the score taken at the time of sigma_hi. ``sigma_lo = 0`` is the
    final denoising step.
    """
    if not 0.0 <= sigma_lo <= sigma_hi:
        raise InvalidParameterException(
            f"Need 0 <= sigma_lo <= sigma_hi, got {sigma_lo} and {sigma_hi}", "sigma_lo"
        )
    t = float(np.clip(schedule.time_for_sigma(sigma_hi), schedule.eps, schedule.T))
    s = _score_at(score, z, t, use_ema)
    delta = sigma_hi**2 - sigma_lo**2
    return z + delta * s + np.sqrt(delta) * noise


def corrector_step_langevin(
    score: ScoreFn,
    z: np.ndarray,
    t: float,
    snr: float,
    noise: np.ndarray,
    use_ema: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """One Langevin step of size ``2 (snr |noise| / |s|)^2``.

    The norms are batch means over the samples with a non-zero score, so
    every active sample takes the same step.

    Returns:
        The updated batch and a mask of samples left unchanged because their
        score vanished
    """
    s = _score_at(score, z, t, use_ema)
    score_norm = np.linalg.norm(s, axis=1)
    skipped = score_norm == 0.0
    if np.any(skipped):
        n_skipped = int(skipped.sum())
        logger.debug(f"Langevin corrector skipped {n_skipped} zero-score samples at t={t:.4g}")
    active = ~skipped
    z_new = np.array(z, dtype=np.float64, copy=True)
    if not np.any(active):
        return z_new, skipped
    noise_norm = np.linalg.norm(noise[active], axis=1).mean()
    step = 2.0 * (snr * noise_norm / score_norm[active].mean()) ** 2
    z_new[active] = z[active] + step * s[active] + np.sqrt(2.0 * step) * noise[active]
    return z_new, skipped


def stopping_time(schedule: SdeSchedule, config: SamplerConfig) -> float:
    """Last time of the sampler grid, from ``stopping_sigma`` or ``stopping_time``.

    Times below eps are clipped to eps.
    """
    if config.stopping_sigma is not None:
        if schedule.kind != SdeKind.VE:
            raise InvalidParameterException(
                "stopping_sigma is defined for VE schedules only", "stopping_sigma"
            )
        t_min = float(schedule.time_for_sigma(max(config.stopping_sigma, 1e-300)))
    else:
        t_min = config.resolved_stopping_time(schedule)
    if t_min < schedule.eps:
        logger.debug(f"Stopping time {t_min:.3g} clipped to eps={schedule.eps:g}")
    return float(np.clip(t_min, schedule.eps, schedule.T))


def final_sigma(schedule: SdeSchedule, config: SamplerConfig) -> Optional[float]:
    """Noise level below sigma(eps) that the last reverse-diffusion step targets.

    None unless a VE ``stopping_sigma`` lies under the grid's floor sigma(eps);
    0 asks for the full denoise.
    """
    if config.stopping_sigma is None or schedule.kind != SdeKind.VE:
        return None
    if config.stopping_sigma >= float(schedule.sigma(schedule.eps)):
        return None
    return float(config.stopping_sigma)


def denoise(
    schedule: SdeSchedule, score: ScoreFn, z: np.ndarray, t: float, use_ema: bool = False
) -> np.ndarray:
    """Noise-free step to t = 0: ``(z + sigma^2(t) s(z, t)) / mu(t)``."""
    s = _score_at(score, z, t, use_ema)
    return (z + float(schedule.sigma2(t)) * s) / float(schedule.mu(t))


def empirical_prior(
    flow: FlowTransform, schedule: SdeSchedule, x: np.ndarray, rng: np.random.Generator
) -> PriorSpec:
    """Data-adaptive prior: a bank of diffused latents ``mu(T) h(x) + sigma(T) noise``."""
    with no_grad():
        z0 = flow.forward(np.asarray(x, dtype=np.float64))[0].data
    bank = float(schedule.mu(schedule.T)) * z0 + float(schedule.sigma(schedule.T)) * rng.standard_normal(z0.shape)
    return PriorSpec(kind=PriorKind.EMPIRICAL, bank=bank)


def sample_latent(
    score: ScoreFn,
    schedule: SdeSchedule,
    config: SamplerConfig,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Latent samples z_0 from the reverse process.

    Draws z_T from the configured prior, scales it by the temperature and
    runs the PC chain (corrector before predictor) or the RK45 ODE down to
    the stopping time, then the optional final denoising step. A VE
    ``stopping_sigma`` below sigma(eps) replaces that step with a noise-free
    reverse-diffusion step from sigma(eps) down to ``stopping_sigma``.

    Raises:
        SolverException: If the ODE sampler fails to converge
    """
    prior = config.prior or PriorSpec.for_schedule(schedule)
    z = config.temperature * prior_sample(prior, n, score.dim, rng)
    if config.n_steps == 0:
        return z
    t_min = stopping_time(schedule, config)
    use_ema = config.use_ema

    if config.method == SamplerMethod.ODE:
        solution = integrate_probability_flow(
            score, schedule, z, schedule.T, t_min, rtol=config.ode_tol, use_ema=use_ema
        )
        z = solution.z_end
        logger.debug(f"ODE sampler used {solution.nfev} score evaluations")
    else:
        predictor = config.predictor
        if predictor == PredictorKind.REVERSE_DIFFUSION and schedule.kind == SdeKind.VP:
            logger.warning("Reverse-diffusion predictor needs a VE schedule; using Euler-Maruyama")
            predictor = PredictorKind.EULER_MARUYAMA
        n_correct = config.resolved_corrector_steps(schedule.kind)
        grid = np.linspace(schedule.T, t_min, config.n_steps + 1)
        skipped = 0
        for k in range(config.n_steps):
            t, t_next = float(grid[k]), float(grid[k + 1])
            for _ in range(n_correct):
                z, mask = corrector_step_langevin(
                    score, z, t, config.snr, rng.standard_normal(z.shape), use_ema
                )
                skipped += int(mask.sum())
            noise = rng.standard_normal(z.shape)
            if predictor == PredictorKind.REVERSE_DIFFUSION:
                z = predictor_step_reverse_diffusion(
                    schedule, score, z, float(schedule.sigma(t_next)), float(schedule.sigma(t)),
                    noise, use_ema,
                )
            else:
                z = predictor_step_em(schedule, score, z, t, t - t_next, noise, use_ema)
        if skipped:
            logger.warning(f"Corrector skipped {skipped} zero-score updates")

    sigma_lo = final_sigma(schedule, config)
    if sigma_lo is not None:
        sigma_hi = float(schedule.sigma(t_min))
        logger.debug(f"Final reverse-diffusion step from sigma={sigma_hi:.3g} to {sigma_lo:.3g}")
        z = predictor_step_reverse_diffusion(
            schedule, score, z, sigma_lo, sigma_hi, np.zeros_like(z), use_ema
        )
    elif config.denoise_final:
        z = denoise(schedule, score, z, t_min, use_ema)
    return z


def sample(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    config: SamplerConfig,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Data-space samples ``h^-1(z_0)``; the inverse flow runs exactly once."""
    rng = rng if rng is not None else np.random.default_rng()
    z = sample_latent(score, schedule, config, n, rng)
    with no_grad():
        return flow.inverse(z).data


def discretization_sensitivity(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    step_counts: Sequence[int],
    reference: np.ndarray,
    metric: MetricKind = MetricKind.SLICED_WASSERSTEIN,
    config: Optional[SamplerConfig] = None,
    n: Optional[int] = None,
    seed: int = 0,
) -> DiscretizationCurve:
    """Sample metric against the reference data for each number of PC steps.

    Every step count reuses the same seed, so the curves differ only
    through the discretization.
    """
    config = config or SamplerConfig()
    metric = MetricKind(metric)
    reference = np.asarray(reference, dtype=np.float64)
    n = n or reference.shape[0]
    values = []
    for steps in step_counts:
        step_config = dataclasses.replace(config, method=SamplerMethod.PC, n_steps=int(steps))
        samples = sample(flow, score, schedule, step_config, n, np.random.default_rng(seed))
        value = sample_metric(metric, samples, reference, rng=np.random.default_rng(seed))
        logger.info(f"N={steps}: {metric.value}={value:.5f}")
        values.append(value)
    return DiscretizationCurve(
        metric=metric.value, step_counts=[int(s) for s in step_counts], values=np.asarray(values)
    )


class SamplingService:
    """Generative sampling from a trained flow and latent score."""

    def __init__(
        self,
        flow: FlowTransform,
        score: ScoreFn,
        schedule: SdeSchedule,
        config: Optional[SamplerConfig] = None,
    ):
        """Initialize with the models to sample from.

        Args:
            flow: The flow h
            score: Latent score field
            schedule: Linear latent SDE
            config: Sampler settings
        """
        self.flow = flow
        self.score = score
        self.schedule = schedule
        self.config = config or SamplerConfig()

    def sample(self, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return sample(self.flow, self.score, self.schedule, self.config, n, rng)

    def discretization_sensitivity(
        self,
        step_counts: Sequence[int],
        reference: np.ndarray,
        metric: MetricKind = MetricKind.SLICED_WASSERSTEIN,
        seed: int = 0,
    ) -> DiscretizationCurve:
        return discretization_sensitivity(
            self.flow, self.score, self.schedule, step_counts, reference, metric,
            self.config, seed=seed,
        )

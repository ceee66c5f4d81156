"""Likelihood service: ODE log-likelihoods, the residual term and NLL/NELBO reports."""

import dataclasses
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from indm_core.autodiff.tensor import no_grad
from indm_core.losses import draw_dsm, latent_nelbo_terms
from indm_core.models.config import EvaluationConfig, ResidualVariance, StartConvention, WeightingKind
from indm_core.models.results import EvalReport
from indm_core.models.schedule import PriorSpec, SdeSchedule
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreFn
from indm_core.ode import integrate_probability_flow
from indm_core.sde import LOG_2PI, prior_logdensity

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 2048

LAMBDA_NOTE = "lambda=0 probability-flow likelihood (approximates the lambda=1 model)"


def _latents(flow: FlowTransform, x0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    with no_grad():
        z0, logdet = flow.forward(np.asarray(x0, dtype=np.float64))
    return z0.data, logdet.data


def perturb(schedule: SdeSchedule, z0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """One transition step to t = eps: ``mu(eps) z0 + sigma(eps) noise``."""
    return float(schedule.mu(schedule.eps)) * z0 + float(schedule.sigma(schedule.eps)) * noise


def latent_loglikelihood(
    score: ScoreFn,
    schedule: SdeSchedule,
    z: np.ndarray,
    rtol: float = 1e-5,
    use_ema: bool = False,
    chunk_size: int = DEFAULT_CHUNK,
) -> Tuple[np.ndarray, int]:
    """log p_eps(z) of the latent model by the probability-flow ODE on [eps, T].

    Returns:
        Per-sample log-densities and the total number of field evaluations
    """
    z = np.asarray(z, dtype=np.float64)
    prior = PriorSpec.for_schedule(schedule)
    logp = np.empty(z.shape[0])
    nfev = 0
    for start in range(0, z.shape[0], chunk_size):
        block = z[start : start + chunk_size]
        solution = integrate_probability_flow(
            score, schedule, block, schedule.eps, schedule.T,
            rtol=rtol, use_ema=use_ema, with_divergence=True,
        )
        nfev += solution.nfev
        with no_grad():
            logp_prior = prior_logdensity(prior, solution.z_end).data
        logp[start : start + chunk_size] = logp_prior + solution.div_integral
    return logp, nfev


def ode_loglikelihood(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    start_at: StartConvention = StartConvention.X_EPS,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
    rtol: float = 1e-5,
    use_ema: bool = False,
) -> np.ndarray:
    """Per-sample ``log p_eps`` plus the flow log-determinant at x0.

    ``start_at=x_eps`` perturbs the latent one transition step to t = eps
    before integrating; ``start_at=x0`` starts the ODE at the data latent.

    Raises:
        SolverException: If the ODE solver fails
    """
    z0, logdet = _latents(flow, x0)
    z_start = z0
    if StartConvention(start_at) == StartConvention.X_EPS:
        if noise is None:
            rng = rng if rng is not None else np.random.default_rng()
            noise = rng.standard_normal(z0.shape)
        z_start = perturb(schedule, z0, noise)
    logp, _ = latent_loglikelihood(score, schedule, z_start, rtol, use_ema)
    return logp + logdet


def residual_term(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    noise: np.ndarray,
    variance: ResidualVariance = ResidualVariance.SIGMA2_OVER_MU2,
    use_ema: bool = False,
) -> np.ndarray:
    """Per-sample ``-log p_model(z0 | z_eps) + log p(z_eps | z0)`` in latent space.

    The reconstruction Gaussian has mean ``(z_eps + sigma^2 s(z_eps, eps)) / mu``
    and variance ``sigma^2 / mu^2`` (or ``sigma^2`` for the DDPM convention);
    both densities are evaluated in closed form.
    """
    z0, _ = _latents(flow, x0)
    noise = np.asarray(noise, dtype=np.float64)
    d = z0.shape[1]
    eps = schedule.eps
    mu = float(schedule.mu(eps))
    sigma2 = float(schedule.sigma2(eps))
    z_eps = perturb(schedule, z0, noise)
    with no_grad():
        s = score(z_eps, np.full(z0.shape[0], eps), use_ema=use_ema).data
    recon = (z_eps + sigma2 * s) / mu
    sq_err = np.sum((z0 - recon) ** 2, axis=1)
    # -log p(z_eps | z0) = d/2 log(2 pi sigma^2) + |noise|^2 / 2
    log_forward = -0.5 * d * (LOG_2PI + np.log(sigma2)) - 0.5 * np.sum(noise**2, axis=1)
    if ResidualVariance(variance) == ResidualVariance.SIGMA2:
        var = sigma2
    else:
        var = sigma2 / mu**2
    neg_log_recon = 0.5 * sq_err / var + 0.5 * d * (LOG_2PI + np.log(var))
    return neg_log_recon + log_forward


def _latent_nelbo(
    score: ScoreFn,
    schedule: SdeSchedule,
    z: np.ndarray,
    n_t: int,
    rng: np.random.Generator,
    use_ema: bool,
) -> np.ndarray:
    draws = draw_dsm(schedule, z.shape[0], z.shape[1], n_t, rng, WeightingKind.LIKELIHOOD)
    with no_grad():
        return latent_nelbo_terms(score, schedule, z, draws, use_ema=use_ema).per_sample()


def evaluate(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    config: Optional[EvaluationConfig] = None,
    rng: Optional[np.random.Generator] = None,
    chunk_size: int = DEFAULT_CHUNK,
) -> EvalReport:
    """NLL and NELBO in both conventions, with the residual term and the gap.

    The corrected NLL is ``E[-log p_eps(z_eps) + residual] - logdet``; the
    uncorrected one starts the ODE at the data latent. The NELBO with
    residual treats ``z_eps`` as the latent data point.

    Args:
        flow: The flow h
        score: Latent score field
        schedule: Linear latent SDE
        x0: Evaluation points (n, d)
        config: Evaluation settings
        rng: Random stream for the perturbation and the denoising draws
        chunk_size: Points per ODE solve

    Returns:
        EvalReport in nats per sample
    """
    config = config or EvaluationConfig()
    rng = rng if rng is not None else np.random.default_rng()
    x0 = np.asarray(x0, dtype=np.float64)
    n, d = x0.shape
    z0, logdet = _latents(flow, x0)
    noise = rng.standard_normal(z0.shape)
    z_eps = perturb(schedule, z0, noise)

    logp_eps, nfev_eps = latent_loglikelihood(
        score, schedule, z_eps, config.ode_tol, config.use_ema, chunk_size
    )
    logp_0, nfev_0 = latent_loglikelihood(
        score, schedule, z0, config.ode_tol, config.use_ema, chunk_size
    )
    residual = residual_term(
        flow, score, schedule, x0, noise, config.residual_variance, config.use_ema
    )
    nelbo_0 = _latent_nelbo(score, schedule, z0, config.n_t, rng, config.use_ema)
    nelbo_eps = _latent_nelbo(score, schedule, z_eps, config.n_t, rng, config.use_ema)

    per_sample_nll = -logp_eps + residual - logdet
    report = EvalReport.build(
        nll_corrected=float(np.mean(per_sample_nll)),
        nll_uncorrected=float(np.mean(-logp_0 - logdet)),
        nelbo_with_residual=float(np.mean(nelbo_eps + residual - logdet)),
        nelbo_without_residual=float(np.mean(nelbo_0 - logdet)),
        residual_term=float(np.mean(residual)),
        dim=d,
        n_eval=n,
        eps=schedule.eps,
        dequantize=config.dequantize,
        data_range=config.data_range,
        metadata={
            "likelihood": LAMBDA_NOTE,
            "residual_variance": ResidualVariance(config.residual_variance).value,
            "nfev": nfev_eps + nfev_0,
        },
        per_sample_nll=per_sample_nll,
    )
    logger.info(
        f"NLL corrected={report.nll_corrected:.4f} uncorrected={report.nll_uncorrected:.4f} "
        f"NELBO={report.nelbo_with_residual:.4f} gap={report.gap:.4f} nats"
    )
    return report


def correction_sweep(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    eps_values: Sequence[float],
    rtol: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
    use_ema: bool = False,
) -> pd.DataFrame:
    """Corrected minus uncorrected ODE NLL for each truncation time eps.

    The score must accept times down to the smallest eps in the sweep.
    Every eps shares one set of perturbation noise.
    """
    rng = rng if rng is not None else np.random.default_rng()
    x0 = np.asarray(x0, dtype=np.float64)
    noise = rng.standard_normal(x0.shape)
    rows = []
    for eps in eps_values:
        truncated = dataclasses.replace(schedule, eps=float(eps))
        corrected = -ode_loglikelihood(
            flow, score, truncated, x0, StartConvention.X_EPS, noise=noise,
            rtol=rtol, use_ema=use_ema,
        )
        uncorrected = -ode_loglikelihood(
            flow, score, truncated, x0, StartConvention.X0, rtol=rtol, use_ema=use_ema
        )
        rows.append(
            {
                "eps": float(eps),
                "nll_x_eps": float(np.mean(corrected)),
                "nll_x0": float(np.mean(uncorrected)),
                "difference": float(np.mean(corrected - uncorrected)),
            }
        )
        logger.debug(f"eps={eps:g}: difference {rows[-1]['difference']:.5f} nats")
    return pd.DataFrame(rows)


class LikelihoodService:
    """Likelihood evaluation of a trained flow and latent score."""

    def __init__(
        self,
        flow: FlowTransform,
        score: ScoreFn,
        schedule: SdeSchedule,
        config: Optional[EvaluationConfig] = None,
    ):
        """Initialize with the models to evaluate.

        Args:
            flow: The flow h
            score: Latent score field
            schedule: Linear latent SDE
            config: Evaluation settings
        """
        self.flow = flow
        self.score = score
        self.schedule = schedule
        self.config = config or EvaluationConfig()

    def evaluate(self, x0: np.ndarray, rng: Optional[np.random.Generator] = None) -> EvalReport:
        return evaluate(self.flow, self.score, self.schedule, x0, self.config, rng)

    def nll(
        self,
        x0: np.ndarray,
        start_at: StartConvention = StartConvention.X_EPS,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Per-sample NLL without the residual term, in nats."""
        return -ode_loglikelihood(
            self.flow, self.score, self.schedule, x0, start_at, rng=rng,
            rtol=self.config.ode_tol, use_ema=self.config.use_ema,
        )

    def correction_sweep(
        self, x0: np.ndarray, eps_values: Sequence[float], rng: Optional[np.random.Generator] = None
    ) -> pd.DataFrame:
        return correction_sweep(
            self.flow, self.score, self.schedule, x0, eps_values,
            rtol=self.config.ode_tol, rng=rng, use_ema=self.config.use_ema,
        )

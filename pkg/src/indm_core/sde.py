"""Linear latent SDE operations: transitions, scores, time sampling and priors."""

import logging
from typing import Union

import numpy as np

from indm_core.autodiff.tensor import Value, as_value, mul, square, vsum
from indm_core.exceptions.indm_exceptions import (
    InvalidParameterException,
    PriorDensityException,
)
from indm_core.models.config import WeightingKind
from indm_core.models.schedule import PriorKind, PriorSpec, SdeKind, SdeSchedule, as_column

logger = logging.getLogger(__name__)

ArrayOrValue = Union[np.ndarray, Value]

LOG_2PI = float(np.log(2.0 * np.pi))


def transition_sample(
    schedule: SdeSchedule, z0: ArrayOrValue, t, noise: np.ndarray
) -> Value:
    """z_t = mu(t) z0 + sigma(t) noise (mu = 1 for VE).

    Raises:
        InvalidParameterException: If any t lies outside [eps, T]
    """
    z0 = as_value(z0)
    t = schedule.check_time(t)
    mu = as_column(schedule.mu(t), z0.data)
    sigma = as_column(schedule.sigma(t), z0.data)
    return mul(z0, mu) + sigma * np.asarray(noise, dtype=np.float64)


def transition_score(schedule: SdeSchedule, z_t: ArrayOrValue, z0: ArrayOrValue, t) -> Value:
    """-(z_t - mu(t) z0) / sigma^2(t)."""
    z_t, z0 = as_value(z_t), as_value(z0)
    t = schedule.check_time(t)
    sigma2 = schedule.sigma2(t)
    if np.any(sigma2 <= 0):
        raise InvalidParameterException("sigma^2(t) vanishes at the requested time", "t")
    residual = z_t - mul(z0, as_column(schedule.mu(t), z0.data))
    return mul(residual, as_column(-1.0 / sigma2, z_t.data))


# ----------------------------------------------------------- diffusion time
def importance_sample_time(schedule: SdeSchedule, u: np.ndarray) -> np.ndarray:
    """Map uniforms on [0, 1] to times with density proportional to g^2/sigma^2.

    VP inverts the closed-form CDF ``(F(t) - F(eps)) / Z`` with
    ``F(t) = log(exp(int beta) - 1)``. For VE the density is constant, so the
    map is uniform on [eps, T].
    """
    u = np.asarray(u, dtype=np.float64)
    if schedule.kind == SdeKind.VE:
        return schedule.eps + (schedule.T - schedule.eps) * u
    z_norm = schedule.importance_normalizer
    f_eps = schedule.importance_antiderivative(schedule.eps)
    int_beta = np.logaddexp(0.0, z_norm * u + f_eps)
    slope = schedule.beta_max - schedule.beta_min
    if slope == 0.0:
        t = int_beta / schedule.beta_min
    else:
        root = np.sqrt(schedule.beta_min**2 + 2.0 * slope * int_beta)
        t = 2.0 * int_beta / (schedule.beta_min + root)
    return np.clip(t, schedule.eps, schedule.T)


def importance_cdf(schedule: SdeSchedule, t) -> np.ndarray:
    """Closed-form CDF of the importance-sampled time."""
    t = np.asarray(t, dtype=np.float64)
    if schedule.kind == SdeKind.VE:
        return (t - schedule.eps) / (schedule.T - schedule.eps)
    f = schedule.importance_antiderivative
    return (f(t) - f(schedule.eps)) / schedule.importance_normalizer


def is_weight(schedule: SdeSchedule, t) -> np.ndarray:
    """Reciprocal of the importance density: Z sigma^2 / g^2 (VP), T - eps (VE).

    Multiplying a g^2-weighted integrand by ``is_weight`` gives its
    importance-sampled estimate.
    """
    t = np.asarray(t, dtype=np.float64)
    if schedule.kind == SdeKind.VE:
        return np.full_like(t, schedule.T - schedule.eps)
    return schedule.importance_normalizer * schedule.sigma2(t) / schedule.g2(t)


def sample_time(
    schedule: SdeSchedule, n: int, rng: np.random.Generator, weighting: WeightingKind
) -> np.ndarray:
    """Per-sample diffusion times for a weighting kind.

    Likelihood weighting draws importance-sampled times; variance weighting
    draws uniform times.
    """
    u = rng.uniform(size=n)
    if WeightingKind(weighting) == WeightingKind.LIKELIHOOD:
        return importance_sample_time(schedule, u)
    return schedule.eps + (schedule.T - schedule.eps) * u


def weighting_lambda(schedule: SdeSchedule, t, weighting: WeightingKind) -> np.ndarray:
    """lambda(t): g^2 for likelihood weighting, sigma^2 for variance weighting."""
    if WeightingKind(weighting) == WeightingKind.LIKELIHOOD:
        return schedule.g2(t)
    return schedule.sigma2(t)


def integrand_weight(schedule: SdeSchedule, t, weighting: WeightingKind) -> np.ndarray:
    """lambda(t) divided by the density ``sample_time`` draws t from."""
    if WeightingKind(weighting) == WeightingKind.LIKELIHOOD:
        return schedule.g2(t) * is_weight(schedule, t)
    return schedule.sigma2(t) * (schedule.T - schedule.eps)


# ------------------------------------------------------------ reverse drift
def reverse_sde_drift(
    schedule: SdeSchedule, z: ArrayOrValue, t, score: ArrayOrValue, lam: float
) -> Value:
    """-beta z / 2 - (1 + lam^2) / 2 * g^2 * score, in forward-time units.

    ``lam = 0`` is the probability-flow ODE and ``lam = 1`` the reverse SDE;
    the diffusion coefficient of the family is ``lam * g``.
    """
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterException(f"lambda must lie in [0, 1], got {lam}", "lam")
    z, score = as_value(z), as_value(score)
    t = np.asarray(t, dtype=np.float64)
    beta = as_column(schedule.beta(t), z.data)
    g2 = as_column(schedule.g2(t), z.data)
    return mul(z, -0.5 * beta) - mul(score, 0.5 * (1.0 + lam * lam) * g2)


# -------------------------------------------------------------------- prior
def _check_density(prior: PriorSpec) -> None:
    if prior.kind == PriorKind.EMPIRICAL:
        raise PriorDensityException(prior.kind.value)


def prior_logdensity(prior: PriorSpec, z: ArrayOrValue) -> Value:
    """Per-sample log N(z; 0, scale^2 I).

    Raises:
        PriorDensityException: For the empirical (sampling-only) prior
    """
    _check_density(prior)
    z = as_value(z)
    d = z.shape[1]
    s2 = prior.scale**2
    quad = vsum(square(z), axis=1)
    return quad * (-0.5 / s2) - 0.5 * d * (LOG_2PI + np.log(s2))


def prior_sample(
    prior: PriorSpec, n: int, dim: int, rng: np.random.Generator
) -> np.ndarray:
    """n prior draws; the empirical prior resamples its bank with replacement."""
    if prior.kind == PriorKind.EMPIRICAL:
        bank = np.asarray(prior.bank, dtype=np.float64)
        return bank[rng.integers(0, bank.shape[0], size=n)].copy()
    return prior.scale * rng.standard_normal((n, dim))


def prior_cross_entropy(schedule: SdeSchedule, prior: PriorSpec, z0: ArrayOrValue) -> Value:
    """Per-sample E[-log pi(z_T) | z0] in closed form over the transition noise.

    ``(d/2) log(2 pi s^2) + (mu(T)^2 |z0|^2 + d sigma^2(T)) / (2 s^2)``.
    """
    _check_density(prior)
    z0 = as_value(z0)
    d = z0.shape[1]
    s2 = prior.scale**2
    mu_t = float(schedule.mu(schedule.T))
    var_t = float(schedule.sigma2(schedule.T))
    quad = vsum(square(z0), axis=1)
    return quad * (mu_t**2 / (2.0 * s2)) + (
        0.5 * d * (LOG_2PI + np.log(s2)) + d * var_t / (2.0 * s2)
    )


def const_term(schedule: SdeSchedule, dim: int) -> float:
    """(d/2) * integral over [eps, T] of (beta - g^2/sigma^2), in closed form."""
    int_beta = float(schedule.int_beta(schedule.T) - schedule.int_beta(schedule.eps))
    return 0.5 * dim * (int_beta - schedule.importance_normalizer)


def gaussian_nll(z: ArrayOrValue, mean: ArrayOrValue, var) -> Value:
    """Per-sample -log N(z; mean, var I) with scalar or per-sample var."""
    z, mean = as_value(z), as_value(mean)
    d = z.shape[1]
    var = np.asarray(var, dtype=np.float64)
    quad = vsum(square(z - mean), axis=1)
    return mul(quad, 0.5 / var) + 0.5 * d * (LOG_2PI + np.log(var))

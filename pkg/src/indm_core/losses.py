"""NELBO of the implicit nonlinear diffusion, score losses and training steps.

The denoising term uses the analytic transition score as its target. By
default it is estimated with a control variate: the same integrand under the
Gaussian reference score ``-z / (mu^2 + sigma^2)`` is subtracted per draw and
its closed-form expectation added back, which leaves the estimator unbiased.
"""

import contextlib
import functools
import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import integrate

from indm_core.autodiff.optim import Adam
from indm_core.autodiff.parameters import ParameterCollection
from indm_core.autodiff.tensor import (
    Value,
    as_value,
    backward,
    enable_grad,
    getitem,
    grad,
    mean,
    mul,
    no_grad,
    reshape,
    square,
    vsum,
)
from indm_core.exceptions.indm_exceptions import InvalidParameterException, NonFiniteException
from indm_core.models.config import ProbeKind, WeightingKind
from indm_core.models.results import NelboBreakdown, StepLosses
from indm_core.models.schedule import PriorSpec, SdeSchedule, as_column
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreFn
from indm_core.sde import (
    const_term,
    integrand_weight,
    prior_cross_entropy,
    prior_logdensity,
    sample_time,
    transition_sample,
    weighting_lambda,
)

logger = logging.getLogger(__name__)


@dataclass
class DsmDraws:
    """Diffusion times and transition noise for ``n * n_t`` denoising draws.

    ``index[j]`` is the batch row draw ``j`` belongs to.
    """

    t: np.ndarray
    noise: np.ndarray
    index: np.ndarray
    n: int
    n_t: int
    weighting: WeightingKind


def draw_dsm(
    schedule: SdeSchedule,
    n: int,
    dim: int,
    n_t: int,
    rng: np.random.Generator,
    weighting: WeightingKind = WeightingKind.LIKELIHOOD,
    antithetic: bool = False,
) -> DsmDraws:
    """Draw per-sample times and noise; antithetic pairs share t and flip the noise."""
    if n_t < 1:
        raise InvalidParameterException(f"n_t must be >= 1, got {n_t}", param_name="n_t")
    m = n * n_t
    t = sample_time(schedule, m, rng, weighting)
    noise = rng.standard_normal((m, dim))
    if antithetic:
        pairs = 2 * (m // 2)
        t[1:pairs:2] = t[0:pairs:2]
        noise[1:pairs:2] = -noise[0:pairs:2]
    return DsmDraws(
        t=t,
        noise=noise,
        index=np.repeat(np.arange(n), n_t),
        n=n,
        n_t=n_t,
        weighting=WeightingKind(weighting),
    )


@functools.lru_cache(maxsize=64)
def control_variate_constants(schedule: SdeSchedule, weighting: WeightingKind) -> Tuple[float, float]:
    """(A, B) such that the reference integrand integrates to ``(A |z0|^2 + d B) / 2``.

    ``A = int lambda mu^2 / c^2`` and ``B = int lambda (1/sigma - sigma/c)^2``
    over [eps, T] with ``c = mu^2 + sigma^2``, by quadrature in log t.
    """
    weighting = WeightingKind(weighting)

    def in_log_time(fn):
        def wrapped(u: float) -> float:
            t = np.exp(u)
            return float(fn(t) * t)

        return wrapped

    def a_integrand(t: float) -> float:
        mu2 = schedule.mu(t) ** 2
        c = mu2 + schedule.sigma2(t)
        return weighting_lambda(schedule, t, weighting) * mu2 / c**2

    def b_integrand(t: float) -> float:
        sigma2 = schedule.sigma2(t)
        c = schedule.mu(t) ** 2 + sigma2
        sigma = np.sqrt(sigma2)
        return weighting_lambda(schedule, t, weighting) * (1.0 / sigma - sigma / c) ** 2

    lo = np.log(max(schedule.eps, 1e-300))
    hi = np.log(schedule.T)
    a, _ = integrate.quad(in_log_time(a_integrand), lo, hi, limit=200, epsabs=1e-12, epsrel=1e-10)
    b, _ = integrate.quad(in_log_time(b_integrand), lo, hi, limit=200, epsabs=1e-12, epsrel=1e-10)
    logger.debug(f"Control variate constants for {weighting.value}: A={a:.6g}, B={b:.6g}")
    return float(a), float(b)


def dsm_per_draw(
    score: ScoreFn,
    schedule: SdeSchedule,
    z0: Value,
    draws: DsmDraws,
    control_variate: bool = True,
    use_ema: bool = False,
) -> Value:
    """Weighted denoising integrand for each draw, shape (n * n_t,).

    ``z0`` holds one latent per draw (already repeated by ``draws.index``).
    """
    t = draws.t
    sigma = schedule.sigma(t)
    target = draws.noise * as_column(-1.0 / sigma, draws.noise)
    z_t = transition_sample(schedule, z0, t, draws.noise)
    s = score(z_t, t, use_ema=use_ema)
    w = integrand_weight(schedule, t, draws.weighting)
    err = vsum(square(s - target), axis=1)
    if not control_variate:
        return mul(err, 0.5 * w)
    c = schedule.mu(t) ** 2 + schedule.sigma2(t)
    s_ref = mul(z_t, as_column(-1.0 / c, z_t.data))
    err_ref = vsum(square(s_ref - target), axis=1)
    a, b = control_variate_constants(schedule, draws.weighting)
    d = z0.shape[1]
    correction = vsum(square(z0), axis=1) * (0.5 * a) + 0.5 * d * b
    return mul(err - err_ref, 0.5 * w) + correction


def per_sample_dsm(
    score: ScoreFn,
    schedule: SdeSchedule,
    z0: Value,
    draws: DsmDraws,
    control_variate: bool = True,
    use_ema: bool = False,
) -> Value:
    """Denoising term per batch row, averaged over its ``n_t`` draws."""
    z0_rep = getitem(z0, draws.index) if draws.n_t > 1 else z0
    per_draw = dsm_per_draw(score, schedule, z0_rep, draws, control_variate, use_ema)
    if draws.n_t == 1:
        return per_draw
    return mean(reshape(per_draw, (draws.n, draws.n_t)), axis=1)


@dataclass
class NelboTerms:
    """Per-sample NELBO summands as tape Values (shape (n,)) plus the constant."""

    flow: Value
    dsm: Value
    prior: Value
    const: float

    def total(self) -> Value:
        return mean(self.flow) + mean(self.dsm) + mean(self.prior) + self.const

    def per_sample(self) -> np.ndarray:
        return self.flow.data + self.dsm.data + self.prior.data + self.const

    def breakdown(self) -> NelboBreakdown:
        """Batch means as floats.

        Raises:
            NonFiniteException: Naming the first non-finite term
        """
        values = {
            "flow_term": float(np.mean(self.flow.data)),
            "dsm_term": float(np.mean(self.dsm.data)),
            "prior_term": float(np.mean(self.prior.data)),
            "const_term": float(self.const),
        }
        for name, value in values.items():
            if not np.isfinite(value):
                logger.error(f"NELBO term {name} is not finite")
                raise NonFiniteException(f"NELBO {name}", context={"term": name})
        return NelboBreakdown.from_terms(**values)


def nelbo_terms(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    n_t: int = 1,
    rng: Optional[np.random.Generator] = None,
    draws: Optional[DsmDraws] = None,
    prior: Optional[PriorSpec] = None,
    control_variate: bool = True,
    antithetic: bool = False,
    use_ema: bool = False,
) -> NelboTerms:
    """Differentiable NELBO summands (likelihood weighting, nats per sample).

    Args:
        flow: The flow h
        score: Latent score field
        schedule: Linear latent SDE
        x0: Data batch (n, d)
        n_t: Diffusion times per sample (ignored when ``draws`` is given)
        rng: Random stream for new draws
        draws: Reuse these times and noise instead of drawing
        prior: Prior at T (defaults to the schedule's analytic prior)
        control_variate: Use the reference-Gaussian control variate
        antithetic: Antithetic noise pairs for new draws
        use_ema: Evaluate the score with its EMA weights

    Raises:
        InvalidParameterException: If n_t < 1
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n, d = x0.shape
    if draws is None:
        rng = rng if rng is not None else np.random.default_rng()
        draws = draw_dsm(schedule, n, d, n_t, rng, WeightingKind.LIKELIHOOD, antithetic)
    elif draws.weighting != WeightingKind.LIKELIHOOD:
        raise InvalidParameterException(
            "The NELBO needs likelihood-weighted draws", param_name="draws"
        )
    z0, logdet = flow.forward(x0)
    latent = latent_nelbo_terms(score, schedule, z0, draws, prior, control_variate, use_ema)
    latent.flow = -logdet
    return latent


def latent_nelbo_terms(
    score: ScoreFn,
    schedule: SdeSchedule,
    z0,
    draws: DsmDraws,
    prior: Optional[PriorSpec] = None,
    control_variate: bool = True,
    use_ema: bool = False,
) -> NelboTerms:
    """NELBO summands of a latent batch treated as data (flow term zero)."""
    z0 = as_value(z0)
    prior = prior or PriorSpec.for_schedule(schedule)
    return NelboTerms(
        flow=Value(np.zeros(z0.shape[0])),
        dsm=per_sample_dsm(score, schedule, z0, draws, control_variate, use_ema),
        prior=prior_cross_entropy(schedule, prior, z0),
        const=const_term(schedule, z0.shape[1]),
    )


def nelbo(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    n_t: int = 1,
    rng: Optional[np.random.Generator] = None,
    **kwargs,
) -> NelboBreakdown:
    """NELBO breakdown in nats per sample, evaluated without recording a tape."""
    with no_grad():
        return nelbo_terms(flow, score, schedule, x0, n_t=n_t, rng=rng, **kwargs).breakdown()


# --------------------------------------------------------------- regularizer
def _probes(kind: ProbeKind, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if ProbeKind(kind) == ProbeKind.RADEMACHER:
        return rng.choice([-1.0, 1.0], size=shape)
    return rng.standard_normal(shape)


def symmetry_penalty_samples(
    score: ScoreFn,
    z: np.ndarray,
    t,
    probe_kind: ProbeKind,
    rng: np.random.Generator,
    create_graph: bool = True,
) -> Value:
    """Per-point unbiased estimates of ``|J - J^T|_F^2`` for the score Jacobian J.

    Uses ``(e2^T J e1 - e1^T J e2)^2`` from two vector-Jacobian products.
    """
    z = np.asarray(z, dtype=np.float64)
    e1 = _probes(probe_kind, z.shape, rng)
    e2 = _probes(probe_kind, z.shape, rng)
    with enable_grad():
        zv = Value(z, requires_grad=True)
        s = score(zv, t)
        (jt_e2,) = grad(vsum(mul(s, e2)), [zv], create_graph=create_graph)
        (jt_e1,) = grad(vsum(mul(s, e1)), [zv], create_graph=create_graph)
        diff = vsum(mul(jt_e2, e1), axis=1) - vsum(mul(jt_e1, e2), axis=1)
        return square(diff)


def symmetry_penalty(
    score: ScoreFn,
    z: np.ndarray,
    t,
    probe_kind: ProbeKind = ProbeKind.RADEMACHER,
    rng: Optional[np.random.Generator] = None,
) -> Value:
    rng = rng if rng is not None else np.random.default_rng()
    return mean(symmetry_penalty_samples(score, z, t, probe_kind, rng))


# ------------------------------------------------------------ training steps
@contextlib.contextmanager
def frozen(params: ParameterCollection) -> Iterator[None]:
    """Stop recording gradients for a collection inside the block."""
    saved = [(p, p.requires_grad) for p in params]
    for p, _ in saved:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in saved:
            p.requires_grad = flag


def score_objective(
    score: ScoreFn,
    schedule: SdeSchedule,
    z0: np.ndarray,
    draws: DsmDraws,
    rng: np.random.Generator,
    control_variate: bool = True,
    symmetry_weight: float = 0.0,
    symmetry_probe: ProbeKind = ProbeKind.RADEMACHER,
) -> Value:
    """lambda-weighted denoising loss L_s on fixed latents, plus the optional penalty."""
    z0v = Value(np.asarray(z0, dtype=np.float64))
    loss = mean(per_sample_dsm(score, schedule, z0v, draws, control_variate))
    if symmetry_weight > 0.0:
        z_t = transition_sample(schedule, getitem(z0v, draws.index), draws.t, draws.noise)
        penalty = symmetry_penalty(score, z_t.data, draws.t, symmetry_probe, rng)
        loss = loss + penalty * symmetry_weight
    return loss


def _check_loss(value: Value, name: str) -> float:
    scalar = float(value.data)
    if not np.isfinite(scalar):
        logger.error(f"Loss {name} is not finite")
        raise NonFiniteException(f"loss {name}", context={"term": name})
    return scalar


def _latents(flow: Optional[FlowTransform], x0: np.ndarray) -> np.ndarray:
    if flow is None:
        return np.asarray(x0, dtype=np.float64)
    with no_grad():
        return flow.forward(x0)[0].data


def score_only_step(
    score,
    schedule: SdeSchedule,
    weighting: WeightingKind,
    batch: np.ndarray,
    score_opt: Adam,
    rng: np.random.Generator,
    flow: Optional[FlowTransform] = None,
    n_t: int = 1,
    control_variate: bool = True,
    antithetic: bool = False,
    symmetry_weight: float = 0.0,
    symmetry_probe: ProbeKind = ProbeKind.RADEMACHER,
) -> StepLosses:
    """One score update with the flow held fixed (the linear-diffusion baseline)."""
    batch = np.asarray(batch, dtype=np.float64)
    n, d = batch.shape
    draws = draw_dsm(schedule, n, d, n_t, rng, weighting, antithetic)
    z0 = _latents(flow, batch)
    score_opt.zero_grad()
    loss_s = score_objective(
        score, schedule, z0, draws, rng, control_variate, symmetry_weight, symmetry_probe
    )
    value = _check_loss(loss_s, "L_s")
    backward(loss_s)
    score_opt.step()
    score.ema_update()
    return StepLosses(loss_flow=float("nan"), loss_score=value)


def train_step_algorithm1(
    flow: FlowTransform,
    score,
    schedule: SdeSchedule,
    weighting: WeightingKind,
    batch: np.ndarray,
    flow_opt: Adam,
    score_opt: Adam,
    rng: np.random.Generator,
    n_t: int = 1,
    prior: Optional[PriorSpec] = None,
    control_variate: bool = True,
    antithetic: bool = False,
    symmetry_weight: float = 0.0,
    symmetry_probe: ProbeKind = ProbeKind.RADEMACHER,
) -> StepLosses:
    """Flow update on the g^2-weighted NELBO, then score update on the lambda-weighted loss.

    The score update sees the latents of the already-updated flow and reuses
    the step's times and noise; with likelihood weighting both updates share
    one set of draws.
    """
    batch = np.asarray(batch, dtype=np.float64)
    n, d = batch.shape
    weighting = WeightingKind(weighting)
    draws_s = draw_dsm(schedule, n, d, n_t, rng, weighting, antithetic)
    if weighting == WeightingKind.LIKELIHOOD:
        draws_f = draws_s
    else:
        draws_f = draw_dsm(schedule, n, d, n_t, rng, WeightingKind.LIKELIHOOD, antithetic)

    flow_opt.zero_grad()
    with frozen(score.params):
        terms = nelbo_terms(
            flow, score, schedule, batch, draws=draws_f, prior=prior,
            control_variate=control_variate,
        )
        loss_f = terms.total()
    breakdown = terms.breakdown()
    backward(loss_f)
    flow_opt.step()

    z0 = _latents(flow, batch)
    score_opt.zero_grad()
    loss_s = score_objective(
        score, schedule, z0, draws_s, rng, control_variate, symmetry_weight, symmetry_probe
    )
    value_s = _check_loss(loss_s, "L_s")
    backward(loss_s)
    score_opt.step()
    score.ema_update()
    return StepLosses(loss_flow=breakdown.total, loss_score=value_s, breakdown=breakdown)


# -------------------------------------------------------------- interpolation
def interpolation_loss(
    flow: FlowTransform, y: np.ndarray, prior: Optional[PriorSpec] = None, schedule: Optional[SdeSchedule] = None
) -> Value:
    """Per-sample ``-log p_phi(y) = -log pi(h(y)) - log|det dh/dy|``."""
    if prior is None:
        prior = PriorSpec.for_schedule(schedule) if schedule is not None else PriorSpec()
    z, logdet = flow.forward(y)
    return -prior_logdensity(prior, z) - logdet


# ----------------------------------------------------- estimator comparisons
def dsm_chain_estimates(
    score: ScoreFn,
    schedule: SdeSchedule,
    z0: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
    coupled: bool,
) -> np.ndarray:
    """Riemann-sum estimates of the g^2-weighted denoising loss on a fixed grid.

    With ``coupled`` all grid times share one simulated forward path;
    otherwise every grid time draws its own analytic transition from z0.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    n, d = z0.shape
    grid = np.linspace(schedule.eps, schedule.T, n_steps + 1)[1:]
    dt = (schedule.T - schedule.eps) / n_steps
    estimate = np.zeros(n)
    deviation = np.zeros_like(z0)
    prev_mu, prev_var = 1.0, 0.0
    with no_grad():
        for t in grid:
            mu_t = float(schedule.mu(t))
            var_t = float(schedule.sigma2(t))
            if coupled:
                decay = mu_t / prev_mu
                step_var = max(var_t - decay**2 * prev_var, 0.0)
                deviation = decay * deviation + np.sqrt(step_var) * rng.standard_normal((n, d))
            else:
                deviation = np.sqrt(var_t) * rng.standard_normal((n, d))
            prev_mu, prev_var = mu_t, var_t
            z_t = mu_t * z0 + deviation
            target = -deviation / var_t
            s = score(z_t, np.full(n, t)).data
            estimate += 0.5 * float(schedule.g2(t)) * np.sum((s - target) ** 2, axis=1) * dt
    return estimate


def dsm_uniform_estimates(
    score: ScoreFn, schedule: SdeSchedule, z0: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Single-draw uniform-time estimates of the g^2-weighted denoising loss."""
    n, d = z0.shape
    draws = draw_dsm(schedule, n, d, 1, rng, WeightingKind.VARIANCE)
    span = schedule.T - schedule.eps
    with no_grad():
        z_t = transition_sample(schedule, z0, draws.t, draws.noise)
        target = draws.noise / -schedule.sigma(draws.t)[:, None]
        s = score(z_t, draws.t).data
    return 0.5 * span * schedule.g2(draws.t) * np.sum((s - target) ** 2, axis=1)


def dsm_importance_estimates(
    score: ScoreFn, schedule: SdeSchedule, z0: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Single-draw importance-sampled estimates of the same quantity (no control variate)."""
    n, d = z0.shape
    draws = draw_dsm(schedule, n, d, 1, rng, WeightingKind.LIKELIHOOD)
    with no_grad():
        return dsm_per_draw(score, schedule, as_value(z0), draws, control_variate=False).data

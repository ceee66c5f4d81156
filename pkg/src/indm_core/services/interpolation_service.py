"""Interpolation service: a diffusion bridge between two datasets through the flow.

Each step minimizes the NELBO of a source batch plus the weighted negative
log-likelihood of a target batch under the pushforward ``p_phi`` of the
prior, updating the flow and the score together.
"""

import logging
from typing import Dict, Optional

import numpy as np
import pandas as pd

from indm_core.autodiff.optim import Adam
from indm_core.autodiff.tensor import backward, mean, no_grad
from indm_core.datasets import batches, generate_dataset
from indm_core.exceptions.indm_exceptions import NonFiniteException
from indm_core.losses import interpolation_loss, nelbo_terms
from indm_core.models.config import EvaluationConfig, InterpolationTask
from indm_core.models.results import StepLosses, TrajectoryBatch
from indm_core.models.schedule import PriorSpec, SdeSchedule
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreField, ScoreFn
from indm_core.services.likelihood_service import evaluate

logger = logging.getLogger(__name__)


def interpolation_step(
    flow: FlowTransform,
    score: ScoreField,
    schedule: SdeSchedule,
    source: np.ndarray,
    target: np.ndarray,
    flow_opt: Adam,
    score_opt: Adam,
    rng: np.random.Generator,
    weight: float = 1.0,
    n_t: int = 1,
) -> StepLosses:
    """One joint update on ``L_INDM(source) + weight * L_int(target)``.

    ``loss_flow`` reports the total and ``loss_score`` the interpolation loss.

    Raises:
        NonFiniteException: If the joint loss is not finite
    """
    flow_opt.zero_grad()
    score_opt.zero_grad()
    terms = nelbo_terms(flow, score, schedule, source, n_t=n_t, rng=rng)
    loss_int = mean(interpolation_loss(flow, target, schedule=schedule))
    total = terms.total() + loss_int * weight
    value = float(total.data)
    if not np.isfinite(value):
        logger.error("Interpolation loss is not finite")
        raise NonFiniteException("loss L_tot", context={"term": "L_tot"})
    breakdown = terms.breakdown()
    backward(total)
    flow_opt.step()
    score_opt.step()
    score.ema_update()
    return StepLosses(loss_flow=value, loss_score=float(loss_int.data), breakdown=breakdown)


def train_interpolation(
    task: InterpolationTask,
    flow: FlowTransform,
    score: ScoreField,
    schedule: SdeSchedule,
    flow_opt: Adam,
    score_opt: Adam,
    steps: int,
    batch_size: int = 512,
    rng: Optional[np.random.Generator] = None,
    n_t: int = 1,
    log_every: int = 100,
) -> pd.DataFrame:
    """Train the bridge for ``steps`` joint updates, one batch of each dataset per step.

    Returns:
        Loss history with columns step, loss_total, loss_int, nelbo
    """
    rng = rng if rng is not None else np.random.default_rng()
    source_stream = batches(generate_dataset(task.source), batch_size, rng)
    target_stream = batches(generate_dataset(task.target), batch_size, rng)
    rows = []
    for step in range(1, steps + 1):
        losses = interpolation_step(
            flow, score, schedule, next(source_stream), next(target_stream),
            flow_opt, score_opt, rng, task.weight, n_t,
        )
        rows.append(
            {
                "step": step,
                "loss_total": losses.loss_flow,
                "loss_int": losses.loss_score,
                "nelbo": losses.breakdown.total,
            }
        )
        if step % log_every == 0 or step == steps:
            logger.info(
                f"step {step}: L_tot={losses.loss_flow:.4f} L_int={losses.loss_score:.4f} "
                f"NELBO={losses.breakdown.total:.4f}"
            )
    return pd.DataFrame(rows)


def forward_latent_paths(
    schedule: SdeSchedule, z0: np.ndarray, times: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Forward SDE paths sampled exactly on an increasing grid starting at or after 0.

    Returns:
        States of shape (len(times), n, d)
    """
    states = np.empty((len(times),) + z0.shape)
    z = z0
    mu_prev, var_prev = 1.0, 0.0
    for k, t in enumerate(times):
        mu_t = float(schedule.mu(t))
        var_t = float(schedule.sigma2(t))
        decay = mu_t / mu_prev
        step_var = max(var_t - decay**2 * var_prev, 0.0)
        z = decay * z + np.sqrt(step_var) * rng.standard_normal(z.shape)
        states[k] = z
        mu_prev, var_prev = mu_t, var_t
    return states


def bridge_trajectory(
    flow: FlowTransform,
    score: Optional[ScoreFn],
    schedule: SdeSchedule,
    x0: np.ndarray,
    n_checkpoints: int = 20,
    rng: Optional[np.random.Generator] = None,
) -> TrajectoryBatch:
    """Data-space view ``h^-1(z_t)`` of forward latent paths from the source batch.

    Checkpoints run from T down to eps so the batch reads like a generative path.
    The paths follow the forward latent SDE, so ``score`` is not evaluated.
    """
    rng = rng if rng is not None else np.random.default_rng()
    with no_grad():
        z0 = flow.forward(np.asarray(x0, dtype=np.float64))[0].data
    times = np.linspace(schedule.eps, schedule.T, n_checkpoints)
    latent = forward_latent_paths(schedule, z0, times, rng)
    k, n, d = latent.shape
    with no_grad():
        data = flow.inverse(latent.reshape(k * n, d)).data.reshape(k, n, d)
    return TrajectoryBatch(times=times[::-1], states=data[::-1], space="data")


def separate_nlls(
    flow: FlowTransform,
    score: ScoreField,
    schedule: SdeSchedule,
    source: np.ndarray,
    target: np.ndarray,
    config: Optional[EvaluationConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """``-log p_{phi,theta}`` of the source (corrected ODE NLL) and ``-log p_phi`` of the target."""
    report = evaluate(flow, score, schedule, source, config, rng)
    with no_grad():
        target_nll = float(np.mean(interpolation_loss(flow, target, PriorSpec.for_schedule(schedule)).data))
    return {"source_nll": report.nll_corrected, "target_nll": target_nll}


class InterpolationService:
    """Train and inspect a diffusion bridge between two datasets."""

    def __init__(
        self,
        task: InterpolationTask,
        flow: FlowTransform,
        score: ScoreField,
        schedule: SdeSchedule,
    ):
        """Initialize with the task and the models it trains.

        Args:
            task: Source, target and loss weight
            flow: The flow h
            score: Latent score field
            schedule: Linear latent SDE
        """
        self.task = task
        self.flow = flow
        self.score = score
        self.schedule = schedule

    def train(
        self,
        flow_opt: Adam,
        score_opt: Adam,
        steps: int,
        batch_size: int = 512,
        rng: Optional[np.random.Generator] = None,
    ) -> pd.DataFrame:
        return train_interpolation(
            self.task, self.flow, self.score, self.schedule, flow_opt, score_opt,
            steps, batch_size, rng,
        )

    def bridge(self, n: int = 500, n_checkpoints: int = 20, rng: Optional[np.random.Generator] = None) -> TrajectoryBatch:
        source = generate_dataset(self.task.source)[:n]
        return bridge_trajectory(self.flow, self.score, self.schedule, source, n_checkpoints, rng)

    def separate_nlls(
        self, n: int, config: Optional[EvaluationConfig] = None, rng: Optional[np.random.Generator] = None
    ) -> Dict[str, float]:
        source = generate_dataset(self.task.source)[:n]
        target = generate_dataset(self.task.target)[:n]
        return separate_nlls(self.flow, self.score, self.schedule, source, target, config, rng)

"""Training service: pre-training, joint flow/score training, logging and checkpoints."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd

from indm_core.autodiff.optim import Adam
from indm_core.checkpoint import Checkpoint, collect_arrays, load_checkpoint, save_checkpoint
from indm_core.datasets import batches, generate_dataset
from indm_core.exceptions.indm_exceptions import NumericalException
from indm_core.losses import draw_dsm, nelbo, score_only_step, train_step_algorithm1
from indm_core.models.config import RunConfig, TrainingConfig, WeightingKind
from indm_core.models.results import NelboBreakdown, StepLosses
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreField
from indm_core.utils.helpers import subsample

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.indm"
LOSSES_NAME = "losses.csv"
LOSS_COLUMNS = [
    "step",
    "loss_flow",
    "loss_score",
    "flow_term",
    "dsm_term",
    "prior_term",
    "const_term",
]


@dataclass
class TrainingResult:
    checkpoint_path: Path
    losses_path: Path
    history: pd.DataFrame
    final_nelbo: Optional[NelboBreakdown]


def build_optimizers(
    flow: FlowTransform, score: ScoreField, training: TrainingConfig
) -> Tuple[Adam, Adam]:
    common = dict(
        grad_clip=training.grad_clip,
        lr_drop_step=training.lr_drop_step,
        lr_drop_value=training.lr_drop_value,
    )
    return (
        Adam(flow.params, lr=training.lr_flow, **common),
        Adam(score.params, lr=training.lr_score, **common),
    )


def build_models(config: RunConfig) -> Tuple[FlowTransform, ScoreField, Adam, Adam]:
    """Fresh identity-initialized flow, zero-output score and their optimizers."""
    rng = np.random.default_rng(config.seed)
    dim = config.dataset.dim
    flow = FlowTransform.build(dim, config.flow, rng, identity_init=True)
    score = ScoreField(dim, config.schedule, config.score, rng)
    flow_opt, score_opt = build_optimizers(flow, score, config.training)
    return flow, score, flow_opt, score_opt


def load_trained(path) -> Tuple[RunConfig, FlowTransform, ScoreField, int]:
    """Rebuild the models stored in a checkpoint.

    Raises:
        CheckpointException: If the file is missing, malformed or of another version
    """
    checkpoint = load_checkpoint(path)
    flow, score, _, _ = build_models(checkpoint.config)
    checkpoint.restore(flow, score)
    return checkpoint.config, flow, score, checkpoint.step


class TrainingService:
    """Runs one training experiment end to end.

    Phase one (``pretrain_steps``) updates the score alone on latents of the
    frozen identity-initialized flow; phase two alternates flow and score
    updates. Loss rows are appended to ``losses.csv`` and the checkpoint is
    rewritten at every evaluation step.
    """

    def __init__(self, config: RunConfig):
        """Initialize with a run configuration.

        Args:
            config: Complete experiment configuration
        """
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.checkpoint_path = self.out_dir / CHECKPOINT_NAME
        self.losses_path = self.out_dir / LOSSES_NAME
        self.data = generate_dataset(config.dataset)
        self.flow, self.score, self.flow_opt, self.score_opt = build_models(config)
        eval_rng = np.random.default_rng([config.seed, 2])
        self.eval_batch = subsample(self.data, config.training.eval_batch, eval_rng)
        self.eval_seed = [config.seed, 3]

    # ------------------------------------------------------------------ state
    def save(self, step: int) -> Path:
        checkpoint = Checkpoint(
            config=self.config,
            step=step,
            arrays=collect_arrays(self.flow, self.score, self.flow_opt, self.score_opt),
        )
        return save_checkpoint(self.checkpoint_path, checkpoint)

    def resume(self) -> int:
        """Restore the stored state if a checkpoint exists; return its step."""
        if not self.checkpoint_path.exists():
            return 0
        checkpoint = load_checkpoint(self.checkpoint_path)
        checkpoint.restore(self.flow, self.score, self.flow_opt, self.score_opt)
        logger.info(f"Resumed from {self.checkpoint_path} at step {checkpoint.step}")
        return checkpoint.step

    # --------------------------------------------------------------- training
    def evaluate_nelbo(self) -> NelboBreakdown:
        """NELBO of the fixed evaluation batch with fixed draws (comparable across steps)."""
        rng = np.random.default_rng(self.eval_seed)
        n, d = self.eval_batch.shape
        draws = draw_dsm(self.config.schedule, n, d, 1, rng, WeightingKind.LIKELIHOOD)
        return nelbo(
            self.flow, self.score, self.config.schedule, self.eval_batch, draws=draws,
            control_variate=self.config.training.control_variate,
        )

    def step(self, step: int, batch: np.ndarray, rng: np.random.Generator) -> StepLosses:
        training = self.config.training
        common = dict(
            n_t=training.n_t,
            control_variate=training.control_variate,
            antithetic=training.antithetic,
            symmetry_weight=training.symmetry_weight,
            symmetry_probe=training.symmetry_probe,
        )
        if step <= training.pretrain_steps:
            return score_only_step(
                self.score, self.config.schedule, training.weighting, batch,
                self.score_opt, rng, flow=self.flow, **common,
            )
        return train_step_algorithm1(
            self.flow, self.score, self.config.schedule, training.weighting, batch,
            self.flow_opt, self.score_opt, rng, **common,
        )

    def _append_rows(self, rows: list) -> None:
        frame = pd.DataFrame(rows, columns=LOSS_COLUMNS)
        write_header = not self.losses_path.exists()
        frame.to_csv(self.losses_path, mode="a", header=write_header, index=False)

    def run(
        self,
        resume: bool = False,
        on_eval: Optional[Callable[[int, NelboBreakdown], None]] = None,
    ) -> TrainingResult:
        """Train to ``training.steps``.

        Raises:
            NumericalException: On a non-finite loss or gradient; the last
                good checkpoint is left in place
        """
        training = self.config.training
        self.out_dir.mkdir(parents=True, exist_ok=True)
        start = self.resume() if resume else 0
        if not resume and self.losses_path.exists():
            self.losses_path.unlink()
        rng = np.random.default_rng([self.config.seed, 1, start])
        stream = batches(self.data, training.batch_size, rng)
        rows = []
        breakdown: Optional[NelboBreakdown] = None
        logger.info(
            f"Training {training.steps} steps ({training.pretrain_steps} score-only) "
            f"on {self.config.dataset.name}, weighting={training.weighting.value}"
        )
        for step in range(start + 1, training.steps + 1):
            try:
                losses = self.step(step, next(stream), rng)
            except NumericalException as e:
                logger.error(f"Aborting at step {step}: {e.message}")
                if rows:
                    self._append_rows(rows)
                raise
            if step % training.eval_every == 0 or step == training.steps:
                breakdown = self.evaluate_nelbo()
                row = {"step": step, "loss_flow": losses.loss_flow, "loss_score": losses.loss_score}
                row.update(
                    {k: getattr(breakdown, k) for k in ("flow_term", "dsm_term", "prior_term", "const_term")}
                )
                rows.append(row)
                self._append_rows(rows)
                rows = []
                self.save(step)
                logger.info(
                    f"step {step}: L_f={losses.loss_flow:.4f} L_s={losses.loss_score:.4f} "
                    f"NELBO={breakdown.total:.4f} (flow={breakdown.flow_term:.4f}, "
                    f"dsm={breakdown.dsm_term:.4f}, prior={breakdown.prior_term:.4f})"
                )
                if on_eval is not None:
                    on_eval(step, breakdown)
        if start >= training.steps:
            logger.info("Checkpoint already at the final step; nothing to train")
            if not self.checkpoint_path.exists():
                self.save(start)
        history = pd.read_csv(self.losses_path) if self.losses_path.exists() else pd.DataFrame(columns=LOSS_COLUMNS)
        return TrainingResult(self.checkpoint_path, self.losses_path, history, breakdown)


def run_training(config: RunConfig, resume: bool = False) -> TrainingResult:
    """Train per ``config`` and write ``checkpoint.indm`` and ``losses.csv`` under ``out_dir``."""
    return TrainingService(config).run(resume=resume)

"""CLI command for training a flow and score model."""

import dataclasses
from typing import Optional

import click
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_nelbo, format_outputs
from indm_cli.formatters.export import lines_svg
from indm_core.services.training_service import TrainingService

console = Console()

NELBO_COLUMNS = ["flow_term", "dsm_term", "prior_term", "const_term"]


@click.command()
@click.option("--steps", type=int, help="Total optimizer steps (overrides training.steps)")
@click.option(
    "--pretrain-steps",
    type=int,
    help="Score-only steps on the identity flow before joint training",
)
@click.option("--resume", is_flag=True, help="Continue from checkpoint.indm in the output directory")
@click.option("--plot/--no-plot", default=True, help="Write losses.svg")
@pass_context
def train_command(
    state: CliContext,
    steps: Optional[int],
    pretrain_steps: Optional[int],
    resume: bool,
    plot: bool,
):
    """Train a model; writes checkpoint.indm and losses.csv to the output directory."""
    config = state.run_config()
    overrides = {}
    if steps is not None:
        overrides["steps"] = steps
    if pretrain_steps is not None:
        overrides["pretrain_steps"] = pretrain_steps
    if overrides:
        config = dataclasses.replace(config, training=dataclasses.replace(config.training, **overrides))
    out_dir = state.out_dir(config)
    config = dataclasses.replace(config, out_dir=str(out_dir))

    console.print(
        f"[bold]Training on {config.dataset.name}[/bold] "
        f"({config.training.steps} steps, {config.training.pretrain_steps} score-only)"
    )
    result = TrainingService(config).run(resume=resume)

    if result.final_nelbo is not None:
        format_nelbo(result.final_nelbo, "Final NELBO on the evaluation batch (nats per sample)")
    outputs = {"Checkpoint": result.checkpoint_path, "Losses": result.losses_path}
    if plot and not result.history.empty:
        history = result.history.assign(nelbo=result.history[NELBO_COLUMNS].sum(axis=1))
        outputs["Loss plot"] = lines_svg(
            history,
            "step",
            ["nelbo", "loss_score"],
            out_dir / "losses.svg",
            title="Training losses",
        )
    format_outputs(outputs)

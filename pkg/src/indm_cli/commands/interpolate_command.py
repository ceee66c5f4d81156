"""CLI command for training a diffusion bridge between two datasets."""

import dataclasses
from typing import Optional

import click
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_outputs, format_values
from indm_cli.formatters.export import export_frame, lines_svg, strip_svg
from indm_core.checkpoint import Checkpoint, collect_arrays, save_checkpoint
from indm_core.datasets import generate_dataset
from indm_core.models.config import DatasetSpec, InterpolationTask
from indm_core.services.interpolation_service import InterpolationService
from indm_core.services.training_service import CHECKPOINT_NAME, build_models
from indm_core.utils.formatters import export_to_file

console = Console()


def _dataset(configured: DatasetSpec, name: str, seed: int) -> DatasetSpec:
    """The configured spec when it names this dataset, otherwise a default one."""
    return configured if configured.name == name else DatasetSpec(name=name, seed=seed)


@click.command()
@click.argument("source")
@click.argument("target")
@click.option("--steps", type=int, help="Joint updates (overrides training.steps)")
@click.option("--weight", type=float, help="Multiplier of the interpolation loss")
@click.option("--n", "n_points", type=int, default=500, show_default=True, help="Points per bridge checkpoint")
@click.option("--checkpoints", "n_checkpoints", type=int, help="Bridge checkpoints between eps and T")
@pass_context
def interpolate_command(
    state: CliContext,
    source: str,
    target: str,
    steps: Optional[int],
    weight: Optional[float],
    n_points: int,
    n_checkpoints: Optional[int],
):
    """Train a bridge from SOURCE to TARGET; writes bridge.csv, bridge.svg and separate NLLs."""
    config = state.run_config()
    base = config.interpolation or InterpolationTask()
    task = InterpolationTask(
        source=_dataset(base.source, source, config.dataset.seed),
        target=_dataset(base.target, target, config.dataset.seed + 1),
        weight=base.weight if weight is None else weight,
    )
    # fail on unknown names before building models
    generate_dataset(dataclasses.replace(task.source, n=1))
    generate_dataset(dataclasses.replace(task.target, n=1))

    training = config.training if steps is None else dataclasses.replace(config.training, steps=steps)
    config = dataclasses.replace(
        config, training=training, interpolation=task, dataset=task.source
    )
    out_dir = state.out_dir(config)
    n_checkpoints = n_checkpoints or config.evaluation.n_checkpoints

    flow, score, flow_opt, score_opt = build_models(config)
    service = InterpolationService(task, flow, score, config.schedule)
    console.print(
        f"[bold]Bridging {source} -> {target}[/bold] ({training.steps} steps, weight {task.weight:g})"
    )
    history = service.train(
        flow_opt, score_opt, training.steps, training.batch_size, state.rng(config, 0)
    )
    save_checkpoint(
        out_dir / CHECKPOINT_NAME,
        Checkpoint(config, training.steps, collect_arrays(flow, score, flow_opt, score_opt)),
    )

    trajectory = service.bridge(n_points, n_checkpoints, state.rng(config, 1))
    nlls = service.separate_nlls(
        min(n_points, config.evaluation.n_eval), config.evaluation, state.rng(config, 2)
    )
    format_values({k: f"{v:.4f}" for k, v in nlls.items()}, "Separate NLLs (nats per sample)")
    outputs = {
        "Checkpoint": out_dir / CHECKPOINT_NAME,
        "Losses": export_frame(history, out_dir / "interpolation_losses.csv"),
        "Loss plot": lines_svg(
            history, "step", ["loss_total", "loss_int"], out_dir / "interpolation_losses.svg",
            title="Bridge training losses",
        ),
        "Bridge": export_frame(trajectory.to_frame(), out_dir / "bridge.csv"),
        "Bridge plot": strip_svg(trajectory, out_dir / "bridge.svg", title=f"{source} -> {target}"),
        "Separate NLLs": export_to_file(nlls, out_dir / "separate_nll.txt", "txt"),
    }
    format_outputs(outputs)

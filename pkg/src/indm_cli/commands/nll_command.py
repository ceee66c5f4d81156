"""CLI command for likelihood evaluation."""

import dataclasses
from typing import Optional

import click
import pandas as pd
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_eval_report, format_outputs, format_sweep
from indm_cli.formatters.export import export_frame, export_report, lines_svg
from indm_core.datasets import generate_dataset
from indm_core.models.config import ResidualVariance
from indm_core.services.likelihood_service import LikelihoodService
from indm_core.utils.validators import parse_float_list, validate_eps_values

console = Console()


@click.command()
@click.option("--checkpoint", "-c", type=click.Path(dir_okay=False), help="Checkpoint file")
@click.option("--n-eval", type=int, help="Number of held-out points (overrides evaluation.n_eval)")
@click.option(
    "--residual-variance",
    type=click.Choice([v.value for v in ResidualVariance]),
    help="Variance convention of the reconstruction term",
)
@click.option("--dequantize", is_flag=True, help="Add the 8-bit offset to bits per dim")
@click.option(
    "--eps-sweep",
    help="Comma separated truncation times; writes NLL at x_eps versus x_0 for each",
)
@pass_context
def nll_command(
    state: CliContext,
    checkpoint: Optional[str],
    n_eval: Optional[int],
    residual_variance: Optional[str],
    dequantize: bool,
    eps_sweep: Optional[str],
):
    """Evaluate NLL and NELBO; writes report.txt (key=value) and per_sample_nll.csv."""
    config, flow, score, step = state.load(checkpoint)
    out_dir = state.out_dir(config)
    overrides = {"residual_variance": residual_variance, "n_eval": n_eval}
    evaluation = dataclasses.replace(
        config.evaluation, **{k: v for k, v in overrides.items() if v is not None}
    )
    if dequantize:
        evaluation = dataclasses.replace(evaluation, dequantize=True)

    # held out: same generator, shifted seed
    spec = dataclasses.replace(config.dataset, n=evaluation.n_eval, seed=config.dataset.seed + 1)
    x0 = generate_dataset(spec)
    console.print(f"[bold]Evaluating {x0.shape[0]} held-out points[/bold] at step {step}")

    service = LikelihoodService(flow, score, config.schedule, evaluation)
    report = service.evaluate(x0, state.rng(config, 0))
    format_eval_report(report)
    outputs = {
        "Report": export_report(report, out_dir / "report.txt"),
        "Per-sample NLL": export_frame(
            pd.DataFrame({"nll": report.per_sample_nll}), out_dir / "per_sample_nll.csv"
        ),
    }

    if eps_sweep:
        eps_values = validate_eps_values(parse_float_list(eps_sweep, "eps"), config.schedule.T)
        frame = service.correction_sweep(x0, eps_values, state.rng(config, 1))
        format_sweep(frame)
        outputs["Correction sweep"] = export_frame(frame, out_dir / "correction_sweep.csv")
        outputs["Sweep plot"] = lines_svg(
            frame, "eps", ["difference"], out_dir / "correction_sweep.svg",
            title="NLL(x_eps) - NLL(x_0)", logx=True,
        )
    format_outputs(outputs)

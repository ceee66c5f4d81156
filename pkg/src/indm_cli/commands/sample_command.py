"""CLI command for drawing samples from a trained model."""

import dataclasses
from typing import Optional

import click
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_outputs, format_values
from indm_cli.formatters.export import export_frame, export_points, lines_svg, scatter_svg
from indm_core.datasets import generate_dataset
from indm_core.models.config import MetricKind, PredictorKind, SamplerMethod
from indm_core.models.schedule import PriorKind
from indm_core.services.sampling_service import SamplingService, empirical_prior
from indm_core.utils.validators import parse_step_counts

console = Console()


@click.command()
@click.option("--checkpoint", "-c", type=click.Path(dir_okay=False), help="Checkpoint file")
@click.option("--n", "n_samples", type=int, default=2000, show_default=True, help="Number of samples")
@click.option("--method", type=click.Choice([m.value for m in SamplerMethod]), help="Sampler")
@click.option("--steps", type=int, help="Predictor steps (0 returns the scaled prior draw)")
@click.option(
    "--predictor", type=click.Choice([p.value for p in PredictorKind]), help="Predictor step"
)
@click.option("--corrector-steps", type=int, help="Langevin steps per predictor step")
@click.option("--snr", type=float, help="Corrector signal-to-noise ratio")
@click.option("--temperature", type=float, help="Scale of the initial latent")
@click.option("--stopping-sigma", type=float, help="Stop the VE chain at this noise level")
@click.option(
    "--prior",
    type=click.Choice([PriorKind.STANDARD_NORMAL.value, PriorKind.EMPIRICAL.value]),
    help="Initial latent distribution",
)
@click.option(
    "--sensitivity",
    help="Comma separated step counts; writes the sample metric per count (e.g. 8,16,32,64)",
)
@click.option(
    "--metric",
    type=click.Choice([m.value for m in MetricKind]),
    default=MetricKind.SLICED_WASSERSTEIN.value,
    show_default=True,
    help="Metric for --sensitivity",
)
@pass_context
def sample_command(
    state: CliContext,
    checkpoint: Optional[str],
    n_samples: int,
    method: Optional[str],
    steps: Optional[int],
    predictor: Optional[str],
    corrector_steps: Optional[int],
    snr: Optional[float],
    temperature: Optional[float],
    stopping_sigma: Optional[float],
    prior: Optional[str],
    sensitivity: Optional[str],
    metric: str,
):
    """Generate samples; writes samples.csv (x0,x1) and samples.svg."""
    if n_samples < 1:
        raise click.BadParameter("must be >= 1", param_hint="--n")
    config, flow, score, step = state.load(checkpoint)
    out_dir = state.out_dir(config)
    overrides = {
        "method": method,
        "n_steps": steps,
        "predictor": predictor,
        "corrector_steps": corrector_steps,
        "snr": snr,
        "temperature": temperature,
        "stopping_sigma": stopping_sigma,
        "prior_kind": prior,
    }
    sampler = dataclasses.replace(
        config.sampler, **{k: v for k, v in overrides.items() if v is not None}
    )
    reference = generate_dataset(config.dataset)
    if sampler.prior_kind == PriorKind.EMPIRICAL:
        sampler = dataclasses.replace(
            sampler,
            prior=empirical_prior(flow, config.schedule, reference, state.rng(config, 1)),
        )

    console.print(
        f"[bold]Sampling {n_samples} points[/bold] from step {step} "
        f"({sampler.method.value}, {sampler.n_steps} steps)"
    )
    service = SamplingService(flow, score, config.schedule, sampler)
    samples = service.sample(n_samples, state.rng(config, 0))
    outputs = {
        "Samples": export_points(samples, out_dir / "samples.csv"),
        "Plot": scatter_svg(
            samples, out_dir / "samples.svg", title="Samples", reference=reference[:n_samples]
        ),
    }

    if sensitivity:
        curve = service.discretization_sensitivity(
            parse_step_counts(sensitivity), reference[:n_samples], MetricKind(metric), seed=config.seed
        )
        frame = curve.to_frame()
        outputs["Sensitivity"] = export_frame(frame, out_dir / "discretization.csv")
        outputs["Sensitivity plot"] = lines_svg(
            frame, "n_steps", [curve.metric], out_dir / "discretization.svg",
            title="Sample metric against sampler steps", logx=True,
        )
        format_values(
            {f"N={n}": f"{v:.5f}" for n, v in zip(curve.step_counts, curve.values)},
            f"{curve.metric} to the data",
        )
    format_outputs(outputs)

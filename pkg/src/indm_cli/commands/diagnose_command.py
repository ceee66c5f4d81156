"""CLI command for the induced-diffusion diagnostics."""

import dataclasses
from typing import Optional

import click
import numpy as np
import pandas as pd
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_diagnostics, format_outputs
from indm_cli.formatters.export import export_frame, histogram_svg, lines_svg
from indm_core.datasets import generate_dataset
from indm_core.services.diagnostics_service import DiagnosticsService
from indm_core.utils.formatters import points_to_frame
from indm_core.utils.validators import parse_float_list

console = Console()


@click.command()
@click.option("--checkpoint", "-c", type=click.Path(dir_okay=False), help="Checkpoint file")
@click.option("--n", "n_points", type=int, default=500, show_default=True, help="Data points analysed")
@click.option(
    "--times", default="0.5", show_default=True, help="Comma separated times for the covariance spectra"
)
@click.option(
    "--checkpoints", "n_checkpoints", type=int, help="ODE checkpoints for the cosine curve"
)
@pass_context
def diagnose_command(
    state: CliContext,
    checkpoint: Optional[str],
    n_points: int,
    times: str,
    n_checkpoints: Optional[int],
):
    """Eigen spectra, trajectory cosines, manifold norms and relative energy as CSV and SVG."""
    if n_points < 1:
        raise click.BadParameter("must be >= 1", param_hint="--n")
    config, flow, score, step = state.load(checkpoint)
    out_dir = state.out_dir(config)
    evaluation = config.evaluation
    use_ema = evaluation.use_ema
    n_checkpoints = n_checkpoints or evaluation.n_checkpoints

    x = generate_dataset(dataclasses.replace(config.dataset, n=n_points, seed=config.dataset.seed + 2))
    schedule = config.schedule
    service = DiagnosticsService(flow, score, schedule)
    console.print(f"[bold]Diagnosing step {step} on {n_points} points[/bold]")

    spectra = service.eigen_spectra(x, parse_float_list(times, "times"))
    cosine = service.cosine_curve(x, n_checkpoints, use_ema=use_ema)
    norms = service.manifold_norms(x)
    energy = service.relative_energy(x, use_ema=use_ema)
    coefficients = service.induced_coefficients(x, schedule.T)

    spectra_frame = pd.concat([s.to_frame() for s in spectra], ignore_index=True)
    cosine_frame = cosine.to_frame()
    d = x.shape[1]
    induced_frame = pd.concat(
        [
            points_to_frame(x),
            points_to_frame(coefficients.drift, prefix="drift"),
            points_to_frame(coefficients.covariance.reshape(-1, d * d), prefix="cov"),
        ],
        axis=1,
    )
    summary = pd.DataFrame(
        [{**norms.to_dict(), **energy.to_dict(), "mean_cosine": float(np.nanmean(cosine.cosine))}]
    )
    format_diagnostics(spectra, norms, energy, float(np.nanmean(cosine.cosine)))

    outputs = {
        "Eigen spectra": export_frame(spectra_frame, out_dir / "eigen_spectra.csv"),
        "Cosine curve": export_frame(cosine_frame, out_dir / "cosine.csv"),
        "Induced coefficients": export_frame(induced_frame, out_dir / "induced_coefficients.csv"),
        "Summary": export_frame(summary, out_dir / "diagnostics.csv"),
        "Spectrum plot": histogram_svg(
            spectra_frame.filter(like="lambda").to_numpy(),
            out_dir / "eigen_spectra.svg",
            title="Eigenvalues of G G^T / g^2",
        ),
        "Cosine plot": lines_svg(
            cosine_frame, "t", ["cosine"], out_dir / "cosine.svg",
            title="Cosine to the endpoint chord",
        ),
    }
    format_outputs(outputs)

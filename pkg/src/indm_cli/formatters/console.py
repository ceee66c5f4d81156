"""Console formatters for the CLI interface."""

from pathlib import Path
from typing import Dict, Iterable, Mapping, Sequence

import pandas as pd
from rich.console import Console
from rich.table import Table

from indm_core.models.results import (
    EigenSpectrum,
    EvalReport,
    ManifoldNorms,
    NelboBreakdown,
    RelativeEnergy,
)
from indm_core.utils.formatters import format_value

console = Console()


def _key_value_table(rows: Mapping[str, object]) -> Table:
    table = Table(show_header=False, box=None)
    table.add_column("Property", style="bold blue")
    table.add_column("Value")
    for key, value in rows.items():
        table.add_row(key, format_value(value) if not isinstance(value, str) else value)
    return table


def format_nelbo(breakdown: NelboBreakdown, title: str = "NELBO (nats per sample)") -> None:
    """Print the four NELBO summands and their total.

    Args:
        breakdown: NELBO breakdown to show
        title: Heading above the table
    """
    console.print(f"\n[bold]{title}[/bold]")
    table = Table(show_header=True, header_style="bold blue")
    table.add_column("Term")
    table.add_column("Value", justify="right")
    for name in ("flow_term", "dsm_term", "prior_term", "const_term"):
        table.add_row(name, f"{getattr(breakdown, name):.4f}")
    table.add_row("[bold]total[/bold]", f"[bold]{breakdown.total:.4f}[/bold]")
    console.print(table)


def format_eval_report(report: EvalReport) -> None:
    """Print likelihood results in nats and bits per dimension.

    Args:
        report: Evaluation report
    """
    console.print(f"\n[bold]Likelihood on {report.n_eval} points (d={report.dim}, eps={report.eps:g})[/bold]")
    table = Table(show_header=True, header_style="bold blue")
    table.add_column("Quantity")
    table.add_column("nats", justify="right")
    table.add_column("bpd", justify="right")
    for name in ("nll_corrected", "nll_uncorrected", "nelbo_with_residual", "nelbo_without_residual"):
        nats = getattr(report, name)
        table.add_row(name, f"{nats:.4f}", f"{report.bpd(nats):.4f}")
    table.add_row("gap", f"{report.gap:.4f}", "")
    table.add_row("residual_term", f"{report.residual_term:.4f}", "")
    console.print(table)
    if report.gap < 0:
        console.print(
            "[yellow]Note:[/yellow] negative gap; the ODE likelihood is the lambda=0 approximation."
        )


def format_sweep(frame: pd.DataFrame) -> None:
    """Print a correction sweep (NLL at x_eps versus x_0 per eps)."""
    table = Table(show_header=True, header_style="bold blue")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)


def format_dataset_list(names: Iterable[str]) -> None:
    """Print one registered dataset name per line."""
    for name in names:
        console.print(name)


def format_diagnostics(
    spectra: Sequence[EigenSpectrum],
    norms: ManifoldNorms,
    energy: RelativeEnergy,
    mean_cosine: float,
) -> None:
    """Print a summary of the induced-diffusion diagnostics."""
    console.print("\n[bold]Covariance eigenvalues of G G^T / g^2[/bold]")
    table = Table(show_header=True, header_style="bold blue")
    table.add_column("t", justify="right")
    quantile_keys = list(spectra[0].quantiles) if spectra else []
    for key in quantile_keys:
        table.add_column(key, justify="right")
    table.add_column("max/min", justify="right")
    for spectrum in spectra:
        table.add_row(
            f"{spectrum.t:g}",
            *(f"{spectrum.quantiles[k]:.4f}" for k in quantile_keys),
            f"{spectrum.dispersion:.3f}",
        )
    console.print(table)

    console.print(
        _key_value_table(
            {
                "Mean |x|^2": f"{norms.data_norm:.4f}",
                "Mean |h(x)|^2": f"{norms.latent_norm:.4f}",
                "Prior reference": f"{norms.prior_reference:.4f}",
                "Mean chord cosine": f"{mean_cosine:.4f}",
                "Kinetic energy": f"{energy.kinetic:.4f}",
                "W2^2 of endpoints": f"{energy.w2_squared:.4f}",
                "Relative energy R": f"{energy.ratio:.4f}",
            }
        )
    )


def format_values(values: Mapping[str, object], title: str) -> None:
    console.print(f"\n[bold]{title}[/bold]")
    console.print(_key_value_table(values))


def format_outputs(paths: Dict[str, Path]) -> None:
    """List the files a command wrote."""
    for label, path in paths.items():
        console.print(f"[green]{label}:[/green] {path}")

"""CLI command for listing and exporting the synthetic datasets."""

from typing import Optional

import click
from rich.console import Console

from indm_cli.context import CliContext, pass_context
from indm_cli.formatters.console import format_dataset_list, format_outputs
from indm_cli.formatters.export import export_points, scatter_svg
from indm_core.datasets import available_datasets, generate_dataset
from indm_core.models.config import DatasetSpec

console = Console()


@click.command()
@click.argument("name", required=False)
@click.option("--list", "list_names", is_flag=True, help="Print the registered dataset names")
@click.option("--n", "n_points", type=int, default=10000, show_default=True, help="Number of points")
@click.option("--noise", type=float, help="Jitter standard deviation")
@click.option("--plot/--no-plot", default=False, help="Also write <name>.svg")
@pass_context
def datasets_command(
    state: CliContext,
    name: Optional[str],
    list_names: bool,
    n_points: int,
    noise: Optional[float],
    plot: bool,
):
    """List the datasets, or write NAME's points to <out>/<NAME>.csv."""
    if list_names or name is None:
        format_dataset_list(available_datasets())
        return

    seed = state.seed if state.seed is not None else 0
    spec = DatasetSpec(name=name, n=n_points, noise=noise, seed=seed)
    points = generate_dataset(spec)
    out_dir = state.out_dir()
    outputs = {"Points": export_points(points, out_dir / f"{name}.csv")}
    if plot:
        outputs["Plot"] = scatter_svg(points, out_dir / f"{name}.svg", title=name)
    format_outputs(outputs)

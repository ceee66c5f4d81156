"""Main entry point for the INDM CLI."""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
from rich.console import Console
from rich.logging import RichHandler

from indm_cli.commands.datasets_command import datasets_command
from indm_cli.commands.diagnose_command import diagnose_command
from indm_cli.commands.interpolate_command import interpolate_command
from indm_cli.commands.nll_command import nll_command
from indm_cli.commands.sample_command import sample_command
from indm_cli.commands.train_command import train_command
from indm_cli.context import CliContext
from indm_core import __version__
from indm_core.config import load_environment
from indm_core.exceptions.indm_exceptions import IndmException, NumericalException
from indm_core.utils.helpers import apply_thread_limit

console = Console(stderr=True)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NUMERICAL = 2

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(settings: Dict[str, Any], verbose: bool = False) -> None:
    """Install handlers on the root logger from the ``logging`` section of the environment."""
    level_name = "DEBUG" if verbose else str(settings.get("level", "INFO")).upper()
    level = getattr(logging, level_name, logging.INFO)
    handlers: list = [RichHandler(console=console, show_path=False)]
    log_file: Optional[str] = settings.get("file")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(settings.get("format", DEFAULT_LOG_FORMAT)))
        handlers.append(file_handler)
    # RichHandler renders time and level itself
    logging.basicConfig(level=level, format="%(message)s", handlers=handlers, force=True)


class IndmGroup(click.Group):
    """Click group mapping failures to exit codes: 1 usage or input, 2 numerical."""

    def main(self, *args, **kwargs):
        kwargs["standalone_mode"] = False
        try:
            result = super().main(*args, **kwargs)
        except click.exceptions.Abort:
            console.print("[bold red]Aborted[/bold red]")
            sys.exit(EXIT_ERROR)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_ERROR)
        except NumericalException as e:
            console.print(f"[bold red]Numerical failure:[/bold red] {e.message}")
            logging.getLogger(__name__).debug(f"Error context: {e.to_dict()}")
            sys.exit(EXIT_NUMERICAL)
        except IndmException as e:
            console.print(f"[bold red]Error:[/bold red] {e.message}")
            logging.getLogger(__name__).debug(f"Error context: {e.to_dict()}")
            sys.exit(EXIT_ERROR)
        sys.exit(result if isinstance(result, int) else EXIT_OK)


@click.group(cls=IndmGroup)
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config YAML file")
@click.option("--seed", type=int, help="Override the run seed")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    verbose: bool,
):
    """INDM - train, sample and evaluate implicit nonlinear diffusion models on 2D data."""
    settings = load_environment()
    configure_logging(settings.get("logging", {}), verbose)
    apply_thread_limit(settings.get("runtime", {}).get("threads"))
    ctx.obj = CliContext(config_path=config_path, seed=seed, out=out, settings=settings)


# Register commands
cli.add_command(train_command, "train")
cli.add_command(sample_command, "sample")
cli.add_command(nll_command, "nll")
cli.add_command(diagnose_command, "diagnose")
cli.add_command(interpolate_command, "interpolate")
cli.add_command(datasets_command, "datasets")


def main():
    """Entry point for the CLI."""
    try:
        cli()
    except SystemExit:
        raise
    except Exception as e:
        console.print(f"[bold red]Error:[/bold red] {str(e)}")
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()

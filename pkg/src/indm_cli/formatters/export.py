"""Export formatters for the CLI interface: CSV tables, key=value reports and SVG plots."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from indm_core.exceptions.indm_exceptions import ExportException  # noqa: E402
from indm_core.models.results import EvalReport, TrajectoryBatch  # noqa: E402
from indm_core.utils.formatters import export_to_file, points_to_frame  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def export_points(points: np.ndarray, file_path: PathLike) -> str:
    """Write a point batch as CSV with columns ``x0, x1, ...``."""
    return export_to_file(points_to_frame(points), file_path, "csv")


def export_frame(frame: pd.DataFrame, file_path: PathLike) -> str:
    return export_to_file(frame, file_path, "csv")


def export_report(report: EvalReport, file_path: PathLike) -> str:
    """Write the report as ``key=value`` lines."""
    return export_to_file(report.key_values(), file_path, "txt")


def _save(fig, file_path: PathLike) -> str:
    file_path = Path(file_path)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(file_path, format="svg", bbox_inches="tight")
    except (OSError, ValueError) as e:
        raise ExportException(f"Failed to write plot: {e}", file_path=str(file_path), format="svg")
    finally:
        plt.close(fig)
    logger.debug(f"Wrote {file_path}")
    return str(file_path)


def scatter_svg(
    points: np.ndarray,
    file_path: PathLike,
    title: str = "",
    reference: Optional[np.ndarray] = None,
) -> str:
    """Scatter plot of the first two coordinates, optionally over a reference batch."""
    fig, ax = plt.subplots(figsize=(5, 5))
    if reference is not None:
        ax.scatter(reference[:, 0], reference[:, 1], s=2, alpha=0.3, color="grey", label="data")
    ax.scatter(points[:, 0], points[:, 1], s=2, alpha=0.6, color="tab:blue", label="samples")
    if reference is not None:
        ax.legend(loc="best", markerscale=4)
    ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    return _save(fig, file_path)


def lines_svg(
    frame: pd.DataFrame,
    x: str,
    ys: Sequence[str],
    file_path: PathLike,
    title: str = "",
    logx: bool = False,
    logy: bool = False,
) -> str:
    """Line plot of columns ``ys`` against column ``x``."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for column in ys:
        ax.plot(frame[x], frame[column], label=column, linewidth=1.5)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, file_path)


def histogram_svg(values: np.ndarray, file_path: PathLike, title: str = "", bins: int = 50) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.ravel(values), bins=bins, color="tab:blue", alpha=0.8)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, file_path)


def strip_svg(trajectory: TrajectoryBatch, file_path: PathLike, n_panels: int = 6, title: str = "") -> str:
    """Row of scatter panels at evenly spaced checkpoints of a trajectory."""
    k = trajectory.n_checkpoints
    picks = np.unique(np.linspace(0, k - 1, min(n_panels, k)).round().astype(int))
    fig, axes = plt.subplots(1, len(picks), figsize=(2.5 * len(picks), 2.7), squeeze=False)
    for ax, idx in zip(axes[0], picks):
        states = trajectory.states[idx]
        ax.scatter(states[:, 0], states[:, 1], s=1, alpha=0.5)
        ax.set_title(f"t={trajectory.times[idx]:.3g}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_aspect("equal", adjustable="datalim")
    if title:
        fig.suptitle(title)
    return _save(fig, file_path)

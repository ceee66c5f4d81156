"""Common helper functions."""

import logging
import os
from typing import TYPE_CHECKING, Dict, Optional

if TYPE_CHECKING:
    import numpy as np

logger = logging.getLogger(__name__)

THREAD_VARIABLES = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def thread_limit_env(threads: Optional[int]) -> Dict[str, str]:
    """Environment variables capping the BLAS and OpenMP thread pools."""
    if threads is None:
        return {}
    return {name: str(int(threads)) for name in THREAD_VARIABLES}


def apply_thread_limit(threads: Optional[int]) -> None:
    """Export the thread cap without overriding variables the user already set.

    BLAS libraries read these at load time, so the cap binds fully only when
    applied before numpy is first imported.
    """
    for name, value in thread_limit_env(threads).items():
        os.environ.setdefault(name, value)
    if threads is not None:
        logger.debug(f"Thread cap set to {threads}")


def subsample(points: "np.ndarray", limit: int, rng: "np.random.Generator") -> "np.ndarray":
    """At most ``limit`` rows of ``points``, drawn without replacement."""
    if points.shape[0] <= limit:
        return points
    return points[rng.choice(points.shape[0], size=limit, replace=False)]


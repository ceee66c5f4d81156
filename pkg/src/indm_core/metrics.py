"""Sample-based distances between point clouds."""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.spatial.distance import cdist

from indm_core.exceptions.indm_exceptions import InvalidParameterException, SolverException
from indm_core.models.config import MetricKind

logger = logging.getLogger(__name__)


def _as_points(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidParameterException(f"Expected a non-empty (n, d) batch, got {x.shape}", name)
    return x


def sliced_wasserstein(
    a: np.ndarray,
    b: np.ndarray,
    n_projections: int = 128,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Mean 1-Wasserstein distance between 1D projections on random unit directions."""
    a, b = _as_points(a, "a"), _as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise InvalidParameterException("Point clouds differ in dimension", "b")
    rng = rng if rng is not None else np.random.default_rng(0)
    directions = rng.standard_normal((n_projections, a.shape[1]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    pa, pb = a @ directions.T, b @ directions.T
    return float(
        np.mean([stats.wasserstein_distance(pa[:, k], pb[:, k]) for k in range(n_projections)])
    )


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``2 E|X - Y| - E|X - X'| - E|Y - Y'|`` with Euclidean norms (V-statistic)."""
    a, b = _as_points(a, "a"), _as_points(b, "b")
    cross = cdist(a, b).mean()
    within_a = cdist(a, a).mean()
    within_b = cdist(b, b).mean()
    return float(2.0 * cross - within_a - within_b)


def optimal_assignment(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, float]:
    """Exact squared-Euclidean assignment between equal-size clouds.

    Returns:
        Column index matched to each row of ``a`` and the mean squared cost

    Raises:
        SolverException: If the sizes differ or the solver fails
    """
    a, b = _as_points(a, "a"), _as_points(b, "b")
    if a.shape[0] != b.shape[0]:
        raise SolverException(
            "Assignment needs equal-size samples",
            context={"n_a": a.shape[0], "n_b": b.shape[0]},
        )
    cost = cdist(a, b, metric="sqeuclidean")
    try:
        rows, cols = optimize.linear_sum_assignment(cost)
    except ValueError as e:
        logger.error(f"Assignment solver failed: {e}")
        raise SolverException(f"Assignment solver failed: {e}", context={"n": a.shape[0]})
    matched = np.empty(a.shape[0], dtype=int)
    matched[rows] = cols
    return matched, float(cost[rows, cols].mean())


def wasserstein2_squared(a: np.ndarray, b: np.ndarray) -> float:
    """W_2^2 between two empirical measures of equal size, by exact assignment."""
    return optimal_assignment(a, b)[1]


def gaussian_kl(a: np.ndarray, b: np.ndarray) -> float:
    """KL(N(m_a, S_a) || N(m_b, S_b)) between Gaussians fitted by moments."""
    a, b = _as_points(a, "a"), _as_points(b, "b")
    d = a.shape[1]
    m_a, m_b = a.mean(axis=0), b.mean(axis=0)
    s_a = np.atleast_2d(np.cov(a, rowvar=False))
    s_b = np.atleast_2d(np.cov(b, rowvar=False))
    s_b_inv = np.linalg.inv(s_b)
    diff = m_b - m_a
    _, logdet_a = np.linalg.slogdet(s_a)
    _, logdet_b = np.linalg.slogdet(s_b)
    return float(
        0.5 * (np.trace(s_b_inv @ s_a) + diff @ s_b_inv @ diff - d + logdet_b - logdet_a)
    )


def sample_metric(
    kind: MetricKind, a: np.ndarray, b: np.ndarray, rng: Optional[np.random.Generator] = None
) -> float:
    if MetricKind(kind) == MetricKind.SLICED_WASSERSTEIN:
        return sliced_wasserstein(a, b, rng=rng)
    return energy_distance(a, b)

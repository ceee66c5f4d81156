"""Synthetic 2D datasets, deterministic given their seed."""

import logging
from typing import Callable, Dict, List

import numpy as np

from indm_core.exceptions.indm_exceptions import NonFiniteException, UnknownDatasetException
from indm_core.models.config import DatasetSpec

logger = logging.getLogger(__name__)

Generator = Callable[[DatasetSpec, np.random.Generator], np.ndarray]


def _jitter(points: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise > 0:
        points = points + noise * rng.standard_normal(points.shape)
    return points


def _spiral(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Two interleaved spiral arms."""
    half = spec.n // 2
    angle = np.sqrt(rng.uniform(size=spec.n)) * 3.0 * np.pi
    arm = np.where(np.arange(spec.n) < half, 1.0, -1.0)
    points = np.stack([-np.cos(angle) * angle, np.sin(angle) * angle], axis=1) * arm[:, None]
    points = points / 3.0
    return _jitter(points, 0.1 if spec.noise is None else spec.noise, rng)


def _two_moons(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Two interleaving half circles, half of the points on each."""
    n_upper = spec.n // 2
    theta = np.pi * rng.uniform(size=spec.n)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    points = np.where((np.arange(spec.n) < n_upper)[:, None], upper, lower)
    points = (points - np.array([0.5, 0.25])) * 1.5
    return _jitter(points, 0.05 if spec.noise is None else spec.noise, rng)


def _checkerboard(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform on the dark squares of a 4 x 4 board over [-2, 2]^2."""
    x1 = rng.uniform(-2.0, 2.0, size=spec.n)
    x2 = rng.uniform(size=spec.n) - 2.0 * rng.integers(0, 2, size=spec.n)
    x2 = x2 + np.floor(x1) % 2
    return _jitter(np.stack([x1, x2], axis=1), spec.noise or 0.0, rng)


def _rings(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Two concentric circles of radius 1 and 2, balanced."""
    radius = np.where(np.arange(spec.n) < spec.n // 2, 1.0, 2.0)
    theta = 2.0 * np.pi * rng.uniform(size=spec.n)
    points = radius[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return _jitter(points, 0.05 if spec.noise is None else spec.noise, rng)


def _gaussian(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    return spec.mean + spec.std * rng.standard_normal((spec.n, spec.dim))


def _mixture(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Eight Gaussians evenly spaced on the circle of radius 2."""
    angles = 2.0 * np.pi * np.arange(8) / 8
    centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    points = centers[rng.integers(0, 8, size=spec.n)]
    return _jitter(points, 0.1 if spec.noise is None else spec.noise, rng)


DATASETS: Dict[str, Generator] = {
    "spiral": _spiral,
    "two-moons": _two_moons,
    "checkerboard": _checkerboard,
    "rings": _rings,
    "gaussian": _gaussian,
    "mixture": _mixture,
}


def available_datasets() -> List[str]:
    return list(DATASETS)


def generate_dataset(spec: DatasetSpec) -> np.ndarray:
    """Draw ``spec.n`` points of the named dataset with ``spec.seed``.

    Raises:
        UnknownDatasetException: If the name is not registered
    """
    generator = DATASETS.get(spec.name)
    if generator is None:
        raise UnknownDatasetException(spec.name, available_datasets())
    points = generator(spec, np.random.default_rng(spec.seed))
    if not np.all(np.isfinite(points)):
        raise NonFiniteException(f"dataset {spec.name}")
    logger.debug(f"Generated {spec.n} points of {spec.name} (seed {spec.seed})")
    return points.astype(np.float64)


def batches(data: np.ndarray, batch_size: int, rng: np.random.Generator):
    """Endless stream of batches drawn with replacement."""
    while True:
        yield data[rng.integers(0, data.shape[0], size=batch_size)]

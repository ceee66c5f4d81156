"""Tests for the synthetic datasets and the sample distances."""

import numpy as np
import pytest

from indm_core.datasets import available_datasets, batches, generate_dataset
from indm_core.exceptions.indm_exceptions import (
    InvalidParameterException,
    SolverException,
    UnknownDatasetException,
)
from indm_core.metrics import (
    energy_distance,
    gaussian_kl,
    optimal_assignment,
    sample_metric,
    sliced_wasserstein,
    wasserstein2_squared,
)
from indm_core.models.config import DatasetSpec, MetricKind


@pytest.mark.unit
class TestDatasets:
    def test_registry(self):
        assert available_datasets() == [
            "spiral", "two-moons", "checkerboard", "rings", "gaussian", "mixture",
        ]

    @pytest.mark.parametrize("name", available_datasets())
    def test_shape_and_determinism(self, name):
        spec = DatasetSpec(name=name, n=500, seed=11)
        points = generate_dataset(spec)
        assert points.shape == (500, 2)
        assert points.dtype == np.float64
        assert np.all(np.isfinite(points))
        np.testing.assert_array_equal(points, generate_dataset(spec))
        assert not np.array_equal(points, generate_dataset(DatasetSpec(name=name, n=500, seed=12)))

    def test_gaussian_moments(self):
        points = generate_dataset(DatasetSpec(name="gaussian", n=20000, mean=1.0, std=2.0, dim=3))
        assert points.shape == (20000, 3)
        np.testing.assert_allclose(points.mean(axis=0), 1.0, atol=0.06)
        np.testing.assert_allclose(points.std(axis=0), 2.0, rtol=0.03)

    def test_rings_without_noise(self):
        points = generate_dataset(DatasetSpec(name="rings", n=100, noise=0.0))
        radii = np.linalg.norm(points, axis=1)
        np.testing.assert_allclose(radii[:50], 1.0)
        np.testing.assert_allclose(radii[50:], 2.0)

    def test_checkerboard_uses_dark_squares(self):
        points = generate_dataset(DatasetSpec(name="checkerboard", n=2000))
        assert np.all(np.abs(points) <= 2.0)
        cells = np.floor(points[:, 0]) + np.floor(points[:, 1])
        assert np.all(cells % 2 == 0)

    def test_unknown_name(self):
        with pytest.raises(UnknownDatasetException) as excinfo:
            generate_dataset(DatasetSpec(name="swiss-roll"))
        assert excinfo.value.context["valid"] == available_datasets()

    def test_spec_validation(self):
        with pytest.raises(InvalidParameterException):
            DatasetSpec(n=0)
        with pytest.raises(InvalidParameterException):
            DatasetSpec(name="rings", dim=3)
        with pytest.raises(InvalidParameterException):
            DatasetSpec(name="gaussian", std=0.0)

    def test_batches_draw_rows(self, rng):
        data = np.arange(20, dtype=float).reshape(10, 2)
        stream = batches(data, 4, rng)
        for _ in range(3):
            batch = next(stream)
            assert batch.shape == (4, 2)
            assert all(any(np.array_equal(row, d) for d in data) for row in batch)


@pytest.mark.unit
class TestMetrics:
    def test_identical_clouds(self, rng):
        a = rng.standard_normal((200, 2))
        assert sliced_wasserstein(a, a) == pytest.approx(0.0, abs=1e-12)
        assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)
        assert gaussian_kl(a, a) == pytest.approx(0.0, abs=1e-10)

    def test_sliced_wasserstein_of_a_shift_in_1d(self, rng):
        x = rng.standard_normal(300)
        assert sliced_wasserstein(x, x + 0.7, n_projections=8) == pytest.approx(0.7)

    def test_energy_distance_detects_a_shift(self, rng):
        a = rng.standard_normal((300, 2))
        assert energy_distance(a, a + 2.0) > 0.5

    def test_dimension_mismatch(self, rng):
        with pytest.raises(InvalidParameterException):
            sliced_wasserstein(rng.standard_normal((5, 2)), rng.standard_normal((5, 3)))

    def test_assignment_is_monotone_in_1d(self):
        a = np.array([0.0, 1.0, 2.0])
        b = np.array([3.0, 1.5, 0.2])
        matched, cost = optimal_assignment(a, b)
        np.testing.assert_array_equal(matched, [2, 1, 0])
        assert cost == pytest.approx((0.2**2 + 0.5**2 + 1.0) / 3)
        assert wasserstein2_squared(a, b) == pytest.approx(cost)

    def test_assignment_needs_equal_sizes(self, rng):
        with pytest.raises(SolverException) as excinfo:
            optimal_assignment(rng.standard_normal((4, 2)), rng.standard_normal((5, 2)))
        assert excinfo.value.context == {"n_a": 4, "n_b": 5}

    def test_gaussian_kl_of_a_mean_shift(self, rng):
        a = rng.standard_normal((500, 2))
        shift = np.array([0.5, -1.0])
        covariance = np.cov(a, rowvar=False)
        expected = 0.5 * shift @ np.linalg.inv(covariance) @ shift
        assert gaussian_kl(a, a + shift) == pytest.approx(expected)

    def test_sample_metric_dispatch(self, rng):
        a, b = rng.standard_normal((50, 2)), rng.standard_normal((50, 2)) + 1.0
        assert sample_metric(MetricKind.ENERGY_DISTANCE, a, b) == energy_distance(a, b)
        assert sample_metric("sliced-wasserstein", a, b) == sliced_wasserstein(a, b)

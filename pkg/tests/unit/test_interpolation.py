"""Tests for the diffusion bridge between two datasets."""

import numpy as np
import pytest

from indm_core.autodiff.optim import Adam
from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.models.config import (
    DatasetSpec,
    EvaluationConfig,
    FlowConfig,
    InterpolationTask,
    ScoreConfig,
)
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import ScoreField
from indm_core.sde import LOG_2PI
from indm_core.services.interpolation_service import (
    InterpolationService,
    bridge_trajectory,
    forward_latent_paths,
    separate_nlls,
)


@pytest.fixture
def task():
    return InterpolationTask(
        source=DatasetSpec(name="two-moons", n=256, seed=1),
        target=DatasetSpec(name="rings", n=256, seed=2),
        weight=0.5,
    )


@pytest.fixture
def bridge_models(vp_schedule):
    rng = np.random.default_rng(4)
    flow = FlowTransform.build(2, FlowConfig(n_layers=2, hidden=8), rng)
    score = ScoreField(2, vp_schedule, ScoreConfig(hidden=16, n_hidden_layers=2, embed_dim=8, ema_rate=0.0), rng)
    return flow, score


@pytest.mark.unit
class TestBridge:
    def test_forward_paths_have_transition_moments(self, vp_schedule, rng):
        z0 = np.full((20000, 2), 1.5)
        times = np.array([0.1, 0.4, 1.0])
        states = forward_latent_paths(vp_schedule, z0, times, rng)
        assert states.shape == (3, 20000, 2)
        for k, t in enumerate(times):
            np.testing.assert_allclose(states[k].mean(axis=0), 1.5 * vp_schedule.mu(t), atol=0.03)
            np.testing.assert_allclose(states[k].var(axis=0), vp_schedule.sigma2(t), rtol=0.05)

    def test_bridge_reads_from_noise_to_data(self, identity_flow, vp_schedule, rng):
        x0 = rng.standard_normal((20, 2))
        batch = bridge_trajectory(identity_flow, None, vp_schedule, x0, n_checkpoints=6, rng=rng)
        assert batch.space == "data"
        assert batch.states.shape == (6, 20, 2)
        assert np.all(np.diff(batch.times) < 0)
        assert batch.times[-1] == pytest.approx(vp_schedule.eps)
        np.testing.assert_allclose(batch.states[-1], x0, atol=0.02)

    def test_bridge_does_not_depend_on_score(self, random_flow, gaussian_score, vp_schedule, rng):
        x0 = rng.standard_normal((10, 2))
        with_score = bridge_trajectory(
            random_flow, gaussian_score, vp_schedule, x0, 4, np.random.default_rng(2)
        )
        without = bridge_trajectory(random_flow, None, vp_schedule, x0, 4, np.random.default_rng(2))
        np.testing.assert_array_equal(with_score.states, without.states)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidParameterException):
            InterpolationTask(
                source=DatasetSpec(name="gaussian", dim=3), target=DatasetSpec(name="rings")
            )

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidParameterException):
            InterpolationTask(weight=-1.0)


@pytest.mark.unit
class TestTraining:
    def test_short_run(self, task, bridge_models, vp_schedule):
        flow, score = bridge_models
        service = InterpolationService(task, flow, score, vp_schedule)
        history = service.train(
            Adam(flow.params, lr=1e-3), Adam(score.params, lr=1e-3), steps=3,
            batch_size=32, rng=np.random.default_rng(0),
        )
        assert list(history.columns) == ["step", "loss_total", "loss_int", "nelbo"]
        assert history["step"].tolist() == [1, 2, 3]
        assert np.all(np.isfinite(history[["loss_total", "loss_int", "nelbo"]].to_numpy()))
        np.testing.assert_allclose(
            history["loss_total"], history["nelbo"] + 0.5 * history["loss_int"], rtol=1e-10
        )
        assert service.bridge(n=10, n_checkpoints=4, rng=np.random.default_rng(0)).states.shape == (4, 10, 2)

    def test_separate_nlls(self, identity_flow, gaussian_score, vp_schedule, rng):
        target = rng.standard_normal((50, 2))
        nlls = separate_nlls(
            identity_flow, gaussian_score, vp_schedule, rng.standard_normal((50, 2)), target,
            EvaluationConfig(n_t=1), rng,
        )
        assert set(nlls) == {"source_nll", "target_nll"}
        expected = np.mean(0.5 * np.sum(target**2, axis=1) + LOG_2PI)
        assert nlls["target_nll"] == pytest.approx(expected)
        assert np.isfinite(nlls["source_nll"])

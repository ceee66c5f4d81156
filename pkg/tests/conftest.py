"""Shared fixtures: schedules, small models and a tiny run configuration."""

import numpy as np
import pytest

from indm_core.models.config import (
    DatasetSpec,
    EvaluationConfig,
    FlowConfig,
    RunConfig,
    SamplerConfig,
    ScoreConfig,
    TrainingConfig,
)
from indm_core.models.schedule import SdeKind, SdeSchedule
from indm_core.nn.flow import FlowTransform
from indm_core.nn.score import GaussianScore


@pytest.fixture(autouse=True)
def testing_environment(monkeypatch):
    monkeypatch.setenv("INDM_ENV", "testing")
    monkeypatch.delenv("INDM_THREADS", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def vp_schedule():
    return SdeSchedule()


@pytest.fixture
def ve_schedule():
    return SdeSchedule(kind=SdeKind.VE, sigma_min=0.01, sigma_max=10.0)


@pytest.fixture
def identity_flow():
    return FlowTransform.identity(2)


@pytest.fixture
def random_flow():
    """A small coupling flow that is far from the identity."""
    config = FlowConfig(n_layers=4, hidden=16, s_max=2.0)
    return FlowTransform.build(2, config, np.random.default_rng(7), identity_init=False)


@pytest.fixture
def gaussian_score(vp_schedule):
    """Exact latent score of N(0, I) data under the VP schedule."""
    return GaussianScore(vp_schedule, dim=2)


@pytest.fixture
def tiny_config(tmp_path):
    """A run that trains in seconds: small networks, few steps, no EMA lag."""
    return RunConfig(
        flow=FlowConfig(n_layers=2, hidden=8),
        score=ScoreConfig(hidden=16, n_hidden_layers=2, embed_dim=8, ema_rate=0.0),
        training=TrainingConfig(
            batch_size=32, steps=6, pretrain_steps=2, eval_every=3, eval_batch=64
        ),
        sampler=SamplerConfig(n_steps=10),
        evaluation=EvaluationConfig(n_eval=32, ode_tol=1e-3, n_checkpoints=4, n_t=2),
        dataset=DatasetSpec(name="two-moons", n=256),
        seed=3,
        out_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def grid_mass():
    """Riemann sum of exp(log_density) over a square grid around a 2D point cloud."""

    def integrate(log_density, points, margin=4.0, n=501):
        lo = float(np.min(points)) - margin
        hi = float(np.max(points)) + margin
        axis = np.linspace(lo, hi, n)
        xx, yy = np.meshgrid(axis, axis)
        grid = np.column_stack([xx.ravel(), yy.ravel()])
        return float(np.sum(np.exp(log_density(grid))) * (axis[1] - axis[0]) ** 2)

    return integrate

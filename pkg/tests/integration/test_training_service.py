"""End-to-end tests of the training loop on a tiny configuration."""

import dataclasses
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from indm_core.checkpoint import load_checkpoint
from indm_core.exceptions.indm_exceptions import NonFiniteException
from indm_core.services.training_service import (
    CHECKPOINT_NAME,
    LOSS_COLUMNS,
    LOSSES_NAME,
    TrainingService,
    load_trained,
    run_training,
)


def with_steps(config, steps, out_dir=None):
    training = dataclasses.replace(config.training, steps=steps)
    return dataclasses.replace(config, training=training, out_dir=out_dir or config.out_dir)


@pytest.mark.integration
class TestTrainingService:
    def test_run_writes_losses_and_checkpoint(self, tiny_config):
        result = run_training(tiny_config)
        out_dir = Path(tiny_config.out_dir)
        assert result.checkpoint_path == out_dir / CHECKPOINT_NAME
        assert result.losses_path == out_dir / LOSSES_NAME
        assert result.checkpoint_path.exists()

        history = pd.read_csv(result.losses_path)
        assert list(history.columns) == LOSS_COLUMNS
        assert history["step"].tolist() == [3, 6]
        assert np.all(np.isfinite(history.to_numpy()))
        assert result.final_nelbo is not None
        nelbo_terms = history[["flow_term", "dsm_term", "prior_term", "const_term"]].iloc[-1].sum()
        assert nelbo_terms == pytest.approx(result.final_nelbo.total)

        config, flow, score, step = load_trained(result.checkpoint_path)
        assert step == 6
        assert config.seed == tiny_config.seed

    def test_pretraining_keeps_the_flow_fixed(self, tiny_config):
        config = with_steps(tiny_config, 2)
        service = TrainingService(config)
        before = {k: v.copy() for k, v in service.flow.params.state_dict().items()}
        service.run()
        for name, value in service.flow.params.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_runs_are_deterministic(self, tiny_config, tmp_path):
        first = run_training(with_steps(tiny_config, 3, str(tmp_path / "a")))
        second = run_training(with_steps(tiny_config, 3, str(tmp_path / "b")))
        pd.testing.assert_frame_equal(first.history, second.history)

    def test_resume_continues_the_log(self, tiny_config):
        run_training(with_steps(tiny_config, 3))
        result = run_training(tiny_config, resume=True)
        assert result.history["step"].tolist() == [3, 6]
        assert load_checkpoint(result.checkpoint_path).step == 6

    def test_fresh_run_replaces_old_log(self, tiny_config):
        run_training(tiny_config)
        result = run_training(with_steps(tiny_config, 3))
        assert result.history["step"].tolist() == [3]

    def test_resume_at_final_step_is_a_no_op(self, tiny_config):
        run_training(tiny_config)
        result = run_training(tiny_config, resume=True)
        assert result.final_nelbo is None
        assert result.history["step"].tolist() == [3, 6]

    def test_numerical_failure_keeps_last_checkpoint(self, tiny_config, mocker):
        original = TrainingService.step

        def failing(self, step, batch, rng):
            if step == 5:
                raise NonFiniteException("loss_flow")
            return original(self, step, batch, rng)

        mocker.patch.object(TrainingService, "step", autospec=True, side_effect=failing)
        service = TrainingService(tiny_config)
        with pytest.raises(NonFiniteException):
            service.run()
        assert load_checkpoint(service.checkpoint_path).step == 3
        assert pd.read_csv(service.losses_path)["step"].tolist() == [3]

    def test_on_eval_callback(self, tiny_config):
        seen = []
        TrainingService(tiny_config).run(on_eval=lambda step, breakdown: seen.append(step))
        assert seen == [3, 6]

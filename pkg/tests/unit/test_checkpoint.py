"""Tests for the binary checkpoint format."""

import struct

import numpy as np
import pytest

from indm_core.autodiff.tensor import backward, square, vsum
from indm_core.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    Checkpoint,
    collect_arrays,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from indm_core.config import run_config_to_dict
from indm_core.exceptions.indm_exceptions import CheckpointException
from indm_core.services.training_service import build_models, load_trained


@pytest.fixture
def trained(tiny_config):
    """Models after one optimizer step each, so moments and EMA are non-trivial."""
    flow, score, flow_opt, score_opt = build_models(tiny_config)
    for params, opt in ((flow.params, flow_opt), (score.params, score_opt)):
        for p in params:
            p.data = p.data + 0.01 * np.arange(p.data.size).reshape(p.data.shape)
            backward(vsum(square(p)))
        opt.step()
    score.ema_update()
    return flow, score, flow_opt, score_opt


@pytest.fixture
def checkpoint(tiny_config, trained):
    return Checkpoint(config=tiny_config, step=7, arrays=collect_arrays(*trained))


@pytest.mark.unit
class TestFormat:
    def test_round_trip_is_bit_exact(self, checkpoint):
        restored = decode(encode(checkpoint))
        assert restored.step == 7
        assert list(restored.arrays) == list(checkpoint.arrays)
        for name, array in checkpoint.arrays.items():
            np.testing.assert_array_equal(restored.arrays[name], array)
            assert restored.arrays[name].shape == np.shape(array)
        assert run_config_to_dict(restored.config) == run_config_to_dict(checkpoint.config)

    def test_header(self, checkpoint):
        payload = encode(checkpoint)
        assert payload[:4] == MAGIC
        assert struct.unpack("<I", payload[4:8])[0] == FORMAT_VERSION

    def test_bad_magic(self, checkpoint):
        payload = encode(checkpoint)
        with pytest.raises(CheckpointException):
            decode(b"NOPE" + payload[4:])

    def test_version_mismatch(self, checkpoint):
        payload = encode(checkpoint)
        patched = payload[:4] + struct.pack("<I", FORMAT_VERSION + 1) + payload[8:]
        with pytest.raises(CheckpointException) as excinfo:
            decode(patched)
        assert excinfo.value.context["expected_version"] == FORMAT_VERSION
        assert excinfo.value.context["actual_version"] == FORMAT_VERSION + 1

    def test_truncation(self, checkpoint):
        payload = encode(checkpoint)
        with pytest.raises(CheckpointException):
            decode(payload[:-3])

    def test_optimizer_sections(self, checkpoint):
        assert checkpoint.arrays["flow_opt.step"] == 1.0
        assert checkpoint.section("score_opt.m")
        assert set(checkpoint.section("ema")) == set(checkpoint.section("score"))


@pytest.mark.unit
class TestFiles:
    def test_save_and_load(self, tmp_path, checkpoint):
        path = save_checkpoint(tmp_path / "nested" / "checkpoint.indm", checkpoint)
        assert [p.name for p in path.parent.iterdir()] == ["checkpoint.indm"]
        assert load_checkpoint(path).step == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointException):
            load_checkpoint(tmp_path / "absent.indm")

    def test_restore_into_fresh_models(self, tmp_path, tiny_config, checkpoint, trained):
        flow, score, flow_opt, score_opt = trained
        path = save_checkpoint(tmp_path / "checkpoint.indm", checkpoint)
        fresh_flow, fresh_score, fresh_flow_opt, fresh_score_opt = build_models(tiny_config)
        load_checkpoint(path).restore(fresh_flow, fresh_score, fresh_flow_opt, fresh_score_opt)
        for name, value in flow.params.state_dict().items():
            np.testing.assert_array_equal(fresh_flow.params[name].data, value)
        for name, value in score.ema.items():
            np.testing.assert_array_equal(fresh_score.ema[name], value)
        assert fresh_score_opt.state.step == score_opt.state.step
        np.testing.assert_array_equal(
            fresh_flow_opt.state.v[flow.params.names()[0]], flow_opt.state.v[flow.params.names()[0]]
        )

    def test_load_trained(self, tmp_path, checkpoint, trained):
        path = save_checkpoint(tmp_path / "checkpoint.indm", checkpoint)
        config, flow, score, step = load_trained(path)
        assert step == 7
        assert config.seed == 3
        for name, value in trained[1].params.state_dict().items():
            np.testing.assert_array_equal(score.params[name].data, value)

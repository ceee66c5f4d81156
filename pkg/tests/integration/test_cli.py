"""CLI tests: every command run against a tiny trained model."""

import pandas as pd
import pytest
from click.testing import CliRunner

from indm_cli.main import EXIT_ERROR, EXIT_NUMERICAL, EXIT_OK, cli
from indm_core.config import dump_run_config
from indm_core.datasets import available_datasets
from indm_core.exceptions.indm_exceptions import NonFiniteException
from indm_core.services.training_service import CHECKPOINT_NAME, LOSS_COLUMNS
from indm_core.utils.formatters import parse_key_value_text


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path, tiny_config):
    path = tmp_path / "run.yml"
    path.write_text(dump_run_config(tiny_config))
    return path


@pytest.fixture
def trained_run(runner, config_file, tmp_path):
    """Output directory holding a checkpoint from ``train``."""
    out = tmp_path / "trained"
    result = runner.invoke(cli, ["--config", str(config_file), "--out", str(out), "train"])
    assert result.exit_code == EXIT_OK, result.output
    return out


def invoke(runner, config_file, out, *args):
    return runner.invoke(cli, ["--config", str(config_file), "--out", str(out), *args])


@pytest.mark.integration
@pytest.mark.cli
class TestCli:
    def test_dataset_list(self, runner, tmp_path):
        result = runner.invoke(cli, ["--out", str(tmp_path), "datasets", "--list"])
        assert result.exit_code == EXIT_OK
        for name in available_datasets():
            assert name in result.output

    def test_dataset_export(self, runner, tmp_path):
        result = runner.invoke(cli, ["--out", str(tmp_path), "datasets", "rings", "--n", "40"])
        assert result.exit_code == EXIT_OK
        assert pd.read_csv(tmp_path / "rings.csv").shape == (40, 2)

    def test_unknown_dataset(self, runner, tmp_path):
        result = runner.invoke(cli, ["--out", str(tmp_path), "datasets", "swiss-roll"])
        assert result.exit_code == EXIT_ERROR

    def test_unknown_flag(self, runner, tmp_path):
        result = runner.invoke(cli, ["--out", str(tmp_path), "sample", "--frobnicate"])
        assert result.exit_code == EXIT_ERROR

    def test_missing_checkpoint(self, runner, config_file, tmp_path):
        result = invoke(runner, config_file, tmp_path / "empty", "sample")
        assert result.exit_code == EXIT_ERROR

    def test_train_outputs(self, trained_run):
        assert (trained_run / CHECKPOINT_NAME).exists()
        assert list(pd.read_csv(trained_run / "losses.csv").columns) == LOSS_COLUMNS
        assert (trained_run / "losses.svg").exists()

    def test_sample(self, runner, config_file, trained_run):
        result = invoke(
            runner, config_file, trained_run,
            "sample", "--n", "50", "--steps", "5", "--sensitivity", "2,4",
        )
        assert result.exit_code == EXIT_OK, result.output
        assert pd.read_csv(trained_run / "samples.csv").shape == (50, 2)
        assert pd.read_csv(trained_run / "discretization.csv")["n_steps"].tolist() == [2, 4]

    def test_sample_rejects_bad_steps_list(self, runner, config_file, trained_run):
        result = invoke(runner, config_file, trained_run, "sample", "--sensitivity", "2,x")
        assert result.exit_code == EXIT_ERROR

    def test_nll(self, runner, config_file, trained_run):
        result = invoke(runner, config_file, trained_run, "nll", "--eps-sweep", "1e-4,1e-3")
        assert result.exit_code == EXIT_OK, result.output
        report = parse_key_value_text((trained_run / "report.txt").read_text())
        for key in ("nll_corrected", "nelbo_with_residual", "gap", "bpd_nll_corrected"):
            assert key in report
        assert report["n_eval"] == "32"
        assert len(pd.read_csv(trained_run / "per_sample_nll.csv")) == 32
        assert pd.read_csv(trained_run / "correction_sweep.csv")["eps"].tolist() == [1e-4, 1e-3]

    def test_diagnose(self, runner, config_file, trained_run):
        result = invoke(
            runner, config_file, trained_run,
            "diagnose", "--n", "20", "--times", "0.2,0.8", "--checkpoints", "4",
        )
        assert result.exit_code == EXIT_OK, result.output
        spectra = pd.read_csv(trained_run / "eigen_spectra.csv")
        assert sorted(set(spectra["t"])) == [0.2, 0.8]
        assert len(pd.read_csv(trained_run / "cosine.csv")) == 3
        assert len(pd.read_csv(trained_run / "induced_coefficients.csv")) == 20

    def test_interpolate(self, runner, config_file, tmp_path):
        out = tmp_path / "bridge"
        result = invoke(
            runner, config_file, out,
            "interpolate", "two-moons", "rings", "--steps", "2", "--n", "16", "--checkpoints", "3",
        )
        assert result.exit_code == EXIT_OK, result.output
        assert len(pd.read_csv(out / "bridge.csv")) == 3 * 16
        assert set(parse_key_value_text((out / "separate_nll.txt").read_text())) == {
            "source_nll", "target_nll",
        }

    def test_interpolate_unknown_dataset(self, runner, config_file, tmp_path):
        result = invoke(runner, config_file, tmp_path, "interpolate", "two-moons", "nowhere")
        assert result.exit_code == EXIT_ERROR

    def test_numerical_failure_exit_code(self, runner, config_file, tmp_path, mocker):
        mocker.patch(
            "indm_cli.commands.train_command.TrainingService.run",
            side_effect=NonFiniteException("loss_flow"),
        )
        result = invoke(runner, config_file, tmp_path / "run", "train")
        assert result.exit_code == EXIT_NUMERICAL

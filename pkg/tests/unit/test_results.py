"""Tests for the result records."""

import math

import numpy as np
import pytest

from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.models.results import EvalReport, nats_to_bpd


def make_report(**kwargs):
    values = dict(
        nll_corrected=2.0,
        nll_uncorrected=2.1,
        nelbo_with_residual=2.5,
        nelbo_without_residual=2.4,
        residual_term=0.1,
        dim=2,
        n_eval=100,
        eps=1e-5,
    )
    values.update(kwargs)
    return EvalReport.build(**values)


@pytest.mark.unit
class TestBitsPerDim:
    def test_conversion(self):
        assert nats_to_bpd(2.0 * math.log(2.0), dim=2) == pytest.approx(1.0)

    def test_dequantization_offset(self):
        assert nats_to_bpd(0.0, dim=2, dequantize=True, data_range=2.0) == pytest.approx(7.0)
        assert nats_to_bpd(0.0, dim=2, dequantize=True, data_range=256.0) == pytest.approx(0.0)


@pytest.mark.unit
class TestEvalReport:
    def test_gap_is_nelbo_minus_nll(self):
        assert make_report().gap == pytest.approx(0.5)

    def test_residual_must_be_finite(self):
        with pytest.raises(InvalidParameterException):
            make_report(residual_term=float("inf"))

    def test_key_values(self):
        report = make_report(metadata={"likelihood": "ode"}, per_sample_nll=np.ones(3))
        values = report.key_values()
        assert list(values)[:6] == [
            "nll_corrected",
            "nll_uncorrected",
            "nelbo_with_residual",
            "nelbo_without_residual",
            "gap",
            "residual_term",
        ]
        assert values["bpd_nll_corrected"] == pytest.approx(2.0 / (2 * math.log(2.0)))
        assert values["likelihood"] == "ode"
        assert "per_sample_nll" not in values

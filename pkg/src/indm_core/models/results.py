"""Models for loss breakdowns, evaluation reports, trajectories and diagnostics."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.models.base import BaseModel


@dataclass(frozen=True)
class NelboBreakdown(BaseModel):
    """Per-sample NELBO in nats, split into its four summands."""

    flow_term: float
    dsm_term: float
    prior_term: float
    const_term: float
    total: float

    @classmethod
    def from_terms(
        cls, flow_term: float, dsm_term: float, prior_term: float, const_term: float
    ) -> "NelboBreakdown":
        total = flow_term + dsm_term + prior_term + const_term
        return cls(
            flow_term=flow_term,
            dsm_term=dsm_term,
            prior_term=prior_term,
            const_term=const_term,
            total=total,
        )


def nats_to_bpd(nats: float, dim: int, dequantize: bool = False, data_range: float = 2.0) -> float:
    """Convert nats per sample to bits per dimension.

    With ``dequantize`` the 8-bit offset ``8 - log2(data_range)`` is added.
    """
    bpd = nats / (dim * math.log(2.0))
    if dequantize:
        bpd += 8.0 - math.log2(data_range)
    return bpd


@dataclass(frozen=True, eq=False)
class EvalReport(BaseModel):
    """Likelihood evaluation in nats per sample, with bits-per-dim views."""

    nll_corrected: float
    nll_uncorrected: float
    nelbo_with_residual: float
    nelbo_without_residual: float
    residual_term: float
    gap: float
    dim: int
    n_eval: int
    eps: float
    dequantize: bool = False
    data_range: float = 2.0
    metadata: Dict[str, Any] = field(default_factory=dict)
    per_sample_nll: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def build(
        cls,
        nll_corrected: float,
        nll_uncorrected: float,
        nelbo_with_residual: float,
        nelbo_without_residual: float,
        residual_term: float,
        dim: int,
        n_eval: int,
        eps: float,
        **kwargs: Any,
    ) -> "EvalReport":
        if not math.isfinite(residual_term):
            raise InvalidParameterException("residual_term must be finite", "residual_term")
        return cls(
            nll_corrected=nll_corrected,
            nll_uncorrected=nll_uncorrected,
            nelbo_with_residual=nelbo_with_residual,
            nelbo_without_residual=nelbo_without_residual,
            residual_term=residual_term,
            gap=nelbo_with_residual - nll_corrected,
            dim=dim,
            n_eval=n_eval,
            eps=eps,
            **kwargs,
        )

    def bpd(self, nats: float) -> float:
        return nats_to_bpd(nats, self.dim, self.dequantize, self.data_range)

    @property
    def bpd_fields(self) -> Dict[str, float]:
        return {
            "bpd_nll_corrected": self.bpd(self.nll_corrected),
            "bpd_nll_uncorrected": self.bpd(self.nll_uncorrected),
            "bpd_nelbo_with_residual": self.bpd(self.nelbo_with_residual),
            "bpd_nelbo_without_residual": self.bpd(self.nelbo_without_residual),
        }

    def key_values(self) -> Dict[str, Any]:
        """Flat mapping used for the ``key=value`` report."""
        values: Dict[str, Any] = {
            "nll_corrected": self.nll_corrected,
            "nll_uncorrected": self.nll_uncorrected,
            "nelbo_with_residual": self.nelbo_with_residual,
            "nelbo_without_residual": self.nelbo_without_residual,
            "gap": self.gap,
            "residual_term": self.residual_term,
        }
        values.update(self.bpd_fields)
        values.update({"dim": self.dim, "n_eval": self.n_eval, "eps": self.eps})
        values.update(self.metadata)
        return values


@dataclass(frozen=True, eq=False)
class TrajectoryBatch(BaseModel):
    """Paths recorded on a strictly decreasing time grid.

    ``states[k]`` holds the batch at ``times[k]``; shape (K, n, d).
    """

    times: np.ndarray
    states: np.ndarray
    space: str = "latent"

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        if times.ndim != 1 or np.any(np.diff(times) >= 0):
            raise InvalidParameterException("Trajectory times must strictly decrease", "times")
        if states.ndim != 3 or states.shape[0] != times.shape[0]:
            raise InvalidParameterException(
                f"States shape {states.shape} does not match {times.shape[0]} times", "states"
            )
        if self.space not in ("latent", "data"):
            raise InvalidParameterException("space must be 'latent' or 'data'", "space")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_checkpoints(self) -> int:
        return int(self.times.shape[0])

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (time, sample)."""
        k, n, d = self.states.shape
        frame = pd.DataFrame(
            self.states.reshape(k * n, d), columns=[f"x{i}" for i in range(d)]
        )
        frame.insert(0, "sample", np.tile(np.arange(n), k))
        frame.insert(0, "t", np.repeat(self.times, n))
        return frame


@dataclass(frozen=True, eq=False)
class InducedCoefficients(BaseModel):
    """Drift, volatility and covariance of the induced data-space SDE, per point."""

    drift: np.ndarray
    volatility: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class EigenSpectrum(BaseModel):
    """Sorted eigenvalues of G G^T / g^2 per point, with summary quantiles."""

    t: float
    eigenvalues: np.ndarray
    quantiles: Dict[str, float]

    @property
    def dispersion(self) -> float:
        return float(np.max(self.eigenvalues) / np.min(self.eigenvalues))

    def to_frame(self) -> pd.DataFrame:
        d = self.eigenvalues.shape[1]
        frame = pd.DataFrame(self.eigenvalues, columns=[f"lambda{i}" for i in range(d)])
        frame.insert(0, "t", self.t)
        return frame


@dataclass(frozen=True, eq=False)
class CosineCurve(BaseModel):
    times: np.ndarray
    cosine: np.ndarray
    n_skipped: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "cosine": self.cosine})


@dataclass(frozen=True)
class ManifoldNorms(BaseModel):
    data_norm: float
    latent_norm: float
    prior_reference: float


@dataclass(frozen=True)
class RelativeEnergy(BaseModel):
    kinetic: float
    w2_squared: float
    ratio: float


@dataclass(frozen=True, eq=False)
class DiscretizationCurve(BaseModel):
    """Sample metric against the number of sampler steps."""

    metric: str
    step_counts: List[int]
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n_steps": self.step_counts, self.metric: self.values})


@dataclass(frozen=True)
class StepLosses(BaseModel):
    """Losses reported by one optimizer step."""

    loss_flow: float
    loss_score: float
    breakdown: Optional[NelboBreakdown] = None

"""Data models for the INDM engine."""

from indm_core.models.base import BaseModel
from indm_core.models.config import (
    Activation,
    DatasetSpec,
    EvaluationConfig,
    FlowConfig,
    InterpolationTask,
    MetricKind,
    PredictorKind,
    ProbeKind,
    ResidualVariance,
    RunConfig,
    SamplerConfig,
    SamplerMethod,
    ScoreConfig,
    StartConvention,
    TrainingConfig,
    WeightingKind,
)
from indm_core.models.results import (
    CosineCurve,
    DiscretizationCurve,
    EigenSpectrum,
    EvalReport,
    InducedCoefficients,
    ManifoldNorms,
    NelboBreakdown,
    RelativeEnergy,
    StepLosses,
    TrajectoryBatch,
    nats_to_bpd,
)
from indm_core.models.schedule import PriorKind, PriorSpec, SdeKind, SdeSchedule

__all__ = [
    "Activation",
    "BaseModel",
    "CosineCurve",
    "DatasetSpec",
    "DiscretizationCurve",
    "EigenSpectrum",
    "EvalReport",
    "EvaluationConfig",
    "FlowConfig",
    "InducedCoefficients",
    "InterpolationTask",
    "ManifoldNorms",
    "MetricKind",
    "NelboBreakdown",
    "PredictorKind",
    "PriorKind",
    "PriorSpec",
    "ProbeKind",
    "RelativeEnergy",
    "ResidualVariance",
    "RunConfig",
    "SamplerConfig",
    "SamplerMethod",
    "ScoreConfig",
    "SdeKind",
    "SdeSchedule",
    "StartConvention",
    "StepLosses",
    "TrajectoryBatch",
    "TrainingConfig",
    "WeightingKind",
    "nats_to_bpd",
]

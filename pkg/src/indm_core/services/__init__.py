"""Services that orchestrate the INDM numerics."""

from indm_core.services.diagnostics_service import DiagnosticsService
from indm_core.services.interpolation_service import InterpolationService
from indm_core.services.likelihood_service import LikelihoodService
from indm_core.services.sampling_service import SamplingService
from indm_core.services.training_service import TrainingService

__all__ = [
    "DiagnosticsService",
    "InterpolationService",
    "LikelihoodService",
    "SamplingService",
    "TrainingService",
]

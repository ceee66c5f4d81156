"""Neural building blocks: dense networks, the invertible flow and score fields."""

from indm_core.nn.flow import (
    ActAffine,
    CouplingLayer,
    FlowTransform,
    flow_forward,
    flow_inverse,
    flow_inverse_jacobian,
    flow_inverse_jacobians,
    flow_jacobian,
    flow_jacobians,
)
from indm_core.nn.layers import MLP
from indm_core.nn.score import (
    GaussianScore,
    RotatedScore,
    ScoreField,
    ScoreFn,
    ZeroScore,
    divergence,
    score_eval,
)

__all__ = [
    "ActAffine",
    "CouplingLayer",
    "FlowTransform",
    "GaussianScore",
    "MLP",
    "RotatedScore",
    "ScoreField",
    "ScoreFn",
    "ZeroScore",
    "divergence",
    "flow_forward",
    "flow_inverse",
    "flow_inverse_jacobian",
    "flow_inverse_jacobians",
    "flow_jacobian",
    "flow_jacobians",
    "score_eval",
]

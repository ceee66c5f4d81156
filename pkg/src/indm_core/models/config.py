"""Models for run, sampler, dataset and interpolation configuration."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from indm_core.exceptions.indm_exceptions import ConfigException, InvalidParameterException
from indm_core.models.base import BaseModel
from indm_core.models.schedule import PriorKind, PriorSpec, SdeKind, SdeSchedule


class WeightingKind(str, Enum):
    """Weighting of the denoising integrand: lambda = g^2 or lambda = sigma^2."""

    LIKELIHOOD = "likelihood"
    VARIANCE = "variance"


class Activation(str, Enum):
    TANH = "tanh"
    SWISH = "swish"
    SIN = "sin"


class ProbeKind(str, Enum):
    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"


class SamplerMethod(str, Enum):
    PC = "pc"
    ODE = "ode"


class PredictorKind(str, Enum):
    EULER_MARUYAMA = "euler-maruyama"
    REVERSE_DIFFUSION = "reverse-diffusion"


class StartConvention(str, Enum):
    """Where the likelihood ODE starts: at the data or one transition step later."""

    X0 = "x0"
    X_EPS = "x_eps"


class ResidualVariance(str, Enum):
    """Variance of the reconstruction Gaussian in the residual term."""

    SIGMA2_OVER_MU2 = "sigma2/mu2"
    SIGMA2 = "sigma2"


class MetricKind(str, Enum):
    SLICED_WASSERSTEIN = "sliced-wasserstein"
    ENERGY_DISTANCE = "energy-distance"


@dataclass(frozen=True, eq=False)
class SamplerConfig(BaseModel):
    """Settings of the latent generative sampler.

    ``corrector_steps=None`` resolves to 1 for VE and 0 for VP;
    ``stopping_time=None`` resolves to the schedule's eps. ``prior_kind=empirical``
    asks the caller to supply ``prior`` with a bank of latent z_T samples.
    """

    method: SamplerMethod = SamplerMethod.PC
    n_steps: int = 1000
    snr: float = 0.14
    corrector_steps: Optional[int] = None
    temperature: float = 1.0
    stopping_time: Optional[float] = None
    stopping_sigma: Optional[float] = None
    prior: Optional[PriorSpec] = None
    prior_kind: PriorKind = PriorKind.STANDARD_NORMAL
    predictor: PredictorKind = PredictorKind.EULER_MARUYAMA
    ode_tol: float = 1e-5
    denoise_final: bool = True
    use_ema: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", SamplerMethod(self.method))
        object.__setattr__(self, "predictor", PredictorKind(self.predictor))
        object.__setattr__(self, "prior_kind", PriorKind(self.prior_kind))
        if self.n_steps < 0:
            raise InvalidParameterException("n_steps must be >= 0", param_name="n_steps")
        if self.snr <= 0:
            raise InvalidParameterException("snr must be positive", param_name="snr")
        if self.temperature <= 0:
            raise InvalidParameterException(
                "temperature must be positive", param_name="temperature"
            )
        if self.stopping_time is not None and self.stopping_time < 0:
            raise InvalidParameterException(
                "stopping_time must be >= 0", param_name="stopping_time"
            )
        if self.stopping_sigma is not None and self.stopping_sigma < 0:
            raise InvalidParameterException(
                "stopping_sigma must be >= 0", param_name="stopping_sigma"
            )
        if self.corrector_steps is not None and self.corrector_steps < 0:
            raise InvalidParameterException(
                "corrector_steps must be >= 0", param_name="corrector_steps"
            )
        if self.ode_tol <= 0:
            raise InvalidParameterException("ode_tol must be positive", param_name="ode_tol")

    def resolved_corrector_steps(self, kind: SdeKind) -> int:
        if self.corrector_steps is not None:
            return self.corrector_steps
        return 1 if kind == SdeKind.VE else 0

    def resolved_stopping_time(self, schedule: SdeSchedule) -> float:
        return schedule.eps if self.stopping_time is None else float(self.stopping_time)


@dataclass(frozen=True)
class DatasetSpec(BaseModel):
    """A 2D synthetic dataset; ``gaussian`` accepts any dimension and moments."""

    name: str = "two-moons"
    n: int = 10000
    noise: Optional[float] = None
    seed: int = 0
    mean: float = 0.0
    std: float = 1.0
    dim: int = 2

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise InvalidParameterException("Dataset size n must be positive", param_name="n")
        if self.dim < 1 or (self.dim != 2 and self.name != "gaussian"):
            raise InvalidParameterException(
                f"Dataset '{self.name}' is two-dimensional", param_name="dim"
            )
        if self.std <= 0:
            raise InvalidParameterException("std must be positive", param_name="std")


@dataclass(frozen=True)
class InterpolationTask(BaseModel):
    """Bridge from the source data to the target data through the flow."""

    source: DatasetSpec = field(default_factory=lambda: DatasetSpec(name="two-moons"))
    target: DatasetSpec = field(default_factory=lambda: DatasetSpec(name="rings"))
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.source.dim != self.target.dim:
            raise InvalidParameterException(
                f"Source and target dimensions differ: {self.source.dim} vs {self.target.dim}",
                param_name="target",
            )
        if self.weight < 0:
            raise InvalidParameterException("weight must be >= 0", param_name="weight")


@dataclass(frozen=True)
class FlowConfig(BaseModel):
    n_layers: int = 8
    hidden: int = 64
    activation: Activation = Activation.TANH
    s_max: float = 5.0
    act_affine: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.n_layers < 0 or self.hidden < 1:
            raise InvalidParameterException("Invalid flow size", param_name="n_layers")
        if self.s_max <= 0:
            raise InvalidParameterException("s_max must be positive", param_name="s_max")


@dataclass(frozen=True)
class ScoreConfig(BaseModel):
    hidden: int = 128
    n_hidden_layers: int = 4
    embed_dim: int = 64
    activation: Activation = Activation.SWISH
    ema_rate: float = 0.9999
    scale_by_sigma: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise InvalidParameterException(
                "embed_dim must be an even number >= 2", param_name="embed_dim"
            )
        if not 0.0 <= self.ema_rate < 1.0:
            raise InvalidParameterException("ema_rate must lie in [0, 1)", param_name="ema_rate")


@dataclass(frozen=True)
class TrainingConfig(BaseModel):
    """Optimizer and loop settings shared by INDM and interpolation training."""

    weighting: WeightingKind = WeightingKind.LIKELIHOOD
    lr_flow: float = 1e-3
    lr_score: float = 2e-4
    batch_size: int = 512
    steps: int = 10000
    pretrain_steps: int = 0
    eval_every: int = 500
    n_t: int = 1
    grad_clip: Optional[float] = None
    lr_drop_step: Optional[int] = None
    lr_drop_value: float = 1e-5
    symmetry_weight: float = 0.0
    symmetry_probe: ProbeKind = ProbeKind.RADEMACHER
    antithetic: bool = False
    control_variate: bool = True
    eval_batch: int = 2048

    def __post_init__(self) -> None:
        object.__setattr__(self, "weighting", WeightingKind(self.weighting))
        object.__setattr__(self, "symmetry_probe", ProbeKind(self.symmetry_probe))
        if not self.steps >= self.pretrain_steps >= 0:
            raise ConfigException(
                f"Need steps >= pretrain_steps >= 0, got {self.steps} and {self.pretrain_steps}",
                key="training.pretrain_steps",
            )
        if self.batch_size < 1:
            raise ConfigException("batch_size must be >= 1", key="training.batch_size")
        if self.n_t < 1:
            raise ConfigException("n_t must be >= 1", key="training.n_t")
        if self.eval_every < 1:
            raise ConfigException("eval_every must be >= 1", key="training.eval_every")


@dataclass(frozen=True)
class EvaluationConfig(BaseModel):
    n_eval: int = 10000
    ode_tol: float = 1e-5
    residual_variance: ResidualVariance = ResidualVariance.SIGMA2_OVER_MU2
    dequantize: bool = False
    data_range: float = 2.0
    use_ema: bool = True
    n_checkpoints: int = 20
    n_t: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "residual_variance", ResidualVariance(self.residual_variance))
        if self.n_eval < 1:
            raise ConfigException("n_eval must be >= 1", key="evaluation.n_eval")
        if self.n_checkpoints < 2:
            raise ConfigException("n_checkpoints must be >= 2", key="evaluation.n_checkpoints")


@dataclass(frozen=True)
class RunConfig(BaseModel):
    """Complete configuration of one experiment."""

    schedule: SdeSchedule = field(default_factory=SdeSchedule)
    flow: FlowConfig = field(default_factory=FlowConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    interpolation: Optional[InterpolationTask] = None
    seed: int = 0
    out_dir: str = "runs/default"

"""Latent score fields: the trainable network and closed-form oracle fields.

Every score object is called as ``score(z, t, use_ema=False)`` with ``z`` a
(n, d) batch and ``t`` a scalar or (n,) array of times, and returns a Value.
"""

import logging
from typing import Dict, Optional, Protocol, Union

import numpy as np

from indm_core.autodiff.functional import exact_divergence, hutchinson_divergence
from indm_core.autodiff.parameters import ParameterCollection
from indm_core.autodiff.tensor import Value, as_value, concat, matmul, mul
from indm_core.models.config import ScoreConfig
from indm_core.models.schedule import SdeKind, SdeSchedule, as_column
from indm_core.nn.layers import MLP

logger = logging.getLogger(__name__)

ArrayOrValue = Union[np.ndarray, Value]


class ScoreFn(Protocol):
    dim: int
    params: ParameterCollection

    def __call__(self, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
        ...


def time_column(t, n: int) -> np.ndarray:
    """Broadcast a scalar or per-sample time to shape (n,)."""
    return np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)).copy()


def sinusoidal_embedding(c: np.ndarray, embed_dim: int) -> np.ndarray:
    """``[sin(c w_k), cos(c w_k)]`` with geometric frequencies from 1 down to 1e-4."""
    half = embed_dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = np.exp(-np.log(10000.0) * np.arange(half) / (half - 1))
    angles = np.asarray(c, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class ScoreField:
    """Trainable score s_theta(z, t) with an EMA shadow of its parameters.

    The trunk sees ``[z, embed(t)]`` where the embedding conditions on
    ``1000 t`` for VP and on ``log sigma^2(t)`` for VE. Its final layer starts
    at zero, so an untrained field is zero everywhere.
    """

    def __init__(
        self,
        dim: int,
        schedule: SdeSchedule,
        config: Optional[ScoreConfig] = None,
        rng: Optional[np.random.Generator] = None,
        name: str = "score",
    ):
        self.dim = dim
        self.schedule = schedule
        self.config = config or ScoreConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = ParameterCollection()
        sizes = (
            [dim + self.config.embed_dim]
            + [self.config.hidden] * self.config.n_hidden_layers
            + [dim]
        )
        self.trunk = MLP(
            f"{name}.trunk", sizes, self.config.activation, rng, self.params, zero_last=True
        )
        self.ema_rate = self.config.ema_rate
        self.ema: Dict[str, np.ndarray] = self.params.state_dict()

    def embed(self, t: np.ndarray) -> np.ndarray:
        if self.schedule.kind == SdeKind.VE:
            c = np.log(self.schedule.sigma2(t))
        else:
            c = 1000.0 * t
        return sinusoidal_embedding(c, self.config.embed_dim)

    def __call__(self, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
        zv = as_value(z)
        t = self.schedule.check_time(time_column(t, zv.shape[0]))
        inputs = concat([zv, Value(self.embed(t))], axis=1)
        out = self.trunk(inputs, weights=self.ema if use_ema else None)
        if self.config.scale_by_sigma:
            out = mul(out, as_column(1.0 / self.schedule.sigma(t), out.data))
        return out

    def ema_update(self) -> Dict[str, np.ndarray]:
        """shadow <- rate * shadow + (1 - rate) * params."""
        rate = self.ema_rate
        for p in self.params:
            self.ema[p.name] = rate * self.ema[p.name] + (1.0 - rate) * p.data
        return self.ema

    def reset_ema(self) -> None:
        self.ema = self.params.state_dict()


class GaussianScore:
    """Exact forward score when the latent data is N(mean, var I).

    ``s(z, t) = -(z - mu(t) mean) / (mu(t)^2 var + sigma^2(t))``.
    """

    def __init__(self, schedule: SdeSchedule, dim: int, mean=0.0, var: float = 1.0):
        self.schedule = schedule
        self.dim = dim
        self.mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (dim,)).copy()
        self.var = float(var)
        self.params = ParameterCollection()

    def marginal_var(self, t) -> np.ndarray:
        return self.schedule.mu(t) ** 2 * self.var + self.schedule.sigma2(t)

    def __call__(self, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
        zv = as_value(z)
        t = time_column(t, zv.shape[0])
        centre = as_column(self.schedule.mu(t), zv.data) * self.mean
        return mul(zv - centre, as_column(-1.0 / self.marginal_var(t), zv.data))


class RotatedScore:
    """A base score plus the divergence-free field ``c * R z`` (R rotates coordinate pairs)."""

    def __init__(self, base: ScoreFn, c: float):
        self.base = base
        self.c = float(c)
        self.dim = base.dim
        self.params = base.params
        rotation = np.zeros((self.dim, self.dim))
        for i in range(0, self.dim - 1, 2):
            rotation[i, i + 1] = -1.0
            rotation[i + 1, i] = 1.0
        self.rotation = rotation

    def __call__(self, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
        zv = as_value(z)
        return self.base(zv, t, use_ema) + matmul(zv, self.rotation.T * self.c)


class ZeroScore:
    def __init__(self, dim: int):
        self.dim = dim
        self.params = ParameterCollection()

    def __call__(self, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
        zv = as_value(z)
        return mul(zv, 0.0)


def score_eval(field: ScoreFn, z: ArrayOrValue, t, use_ema: bool = False) -> Value:
    """s(z, t) for a batch; differentiable in the field's parameters and z."""
    return field(z, t, use_ema=use_ema)


def divergence(field: ScoreFn, z: np.ndarray, t, use_ema: bool = False) -> np.ndarray:
    """Exact trace of the score Jacobian, per point (one reverse pass per coordinate)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = time_column(t, z.shape[0])
    return exact_divergence(lambda v: field(v, t, use_ema), z)


def divergence_hutchinson(
    field: ScoreFn,
    z: np.ndarray,
    t,
    n_probes: int,
    rng: np.random.Generator,
    probe: str = "rademacher",
    use_ema: bool = False,
) -> np.ndarray:
    """Hutchinson trace estimates, shape (n_probes, n)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    t = time_column(t, z.shape[0])
    shape = (n_probes,) + z.shape
    if probe == "rademacher":
        probes = rng.choice([-1.0, 1.0], size=shape)
    else:
        probes = rng.standard_normal(shape)
    return hutchinson_divergence(lambda v: field(v, t, use_ema), z, probes)

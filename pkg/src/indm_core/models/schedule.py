"""Models for the linear latent SDE and its prior."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from indm_core.exceptions.indm_exceptions import InvalidParameterException
from indm_core.models.base import BaseModel

TIME_TOLERANCE = 1e-12


class SdeKind(str, Enum):
    """Linear forward SDE families."""

    VP = "vp"
    VE = "ve"


@dataclass(frozen=True)
class SdeSchedule(BaseModel):
    """A VP or VE linear SDE with its closed-form transition moments.

    VP: beta(t) linear in t, g^2 = beta, mu = exp(-int beta / 2),
    sigma^2 = 1 - exp(-int beta). VE: beta = 0, mu = 1,
    sigma^2(t) = sigma_min^2 (sigma_max / sigma_min)^(2t).
    """

    kind: SdeKind = SdeKind.VP
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min: float = 1e-2
    sigma_max: float = 50.0
    eps: float = 1e-5
    T: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SdeKind(self.kind))
        if not 0.0 <= self.eps < self.T:
            raise InvalidParameterException(
                f"Need 0 <= eps < T, got eps={self.eps}, T={self.T}", param_name="eps"
            )
        if self.kind == SdeKind.VP and not 0.0 < self.beta_min <= self.beta_max:
            raise InvalidParameterException(
                "Need 0 < beta_min <= beta_max for a VP schedule", param_name="beta_min"
            )
        if self.kind == SdeKind.VE and not 0.0 < self.sigma_min < self.sigma_max:
            raise InvalidParameterException(
                "Need 0 < sigma_min < sigma_max for a VE schedule", param_name="sigma_min"
            )

    # ------------------------------------------------------------ coefficients
    def beta(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return np.zeros_like(t)
        return self.beta_min + (self.beta_max - self.beta_min) * t

    def int_beta(self, t) -> np.ndarray:
        """Closed-form integral of beta over [0, t]."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return np.zeros_like(t)
        return 0.5 * (self.beta_max - self.beta_min) * t * t + self.beta_min * t

    def g2(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return self.sigma2(t) * 2.0 * np.log(self.sigma_max / self.sigma_min)
        return self.beta(t)

    def g(self, t) -> np.ndarray:
        return np.sqrt(self.g2(t))

    def mu(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return np.ones_like(t)
        return np.exp(-0.5 * self.int_beta(t))

    def sigma2(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return self.sigma_min**2 * (self.sigma_max / self.sigma_min) ** (2.0 * t)
        return -np.expm1(-self.int_beta(t))

    def sigma(self, t) -> np.ndarray:
        return np.sqrt(self.sigma2(t))

    def time_for_sigma(self, sigma) -> np.ndarray:
        """Inverse of sigma(t) for VE schedules."""
        if self.kind != SdeKind.VE:
            raise InvalidParameterException(
                "time_for_sigma is defined for VE schedules only", param_name="sigma"
            )
        sigma = np.asarray(sigma, dtype=np.float64)
        return np.log(sigma / self.sigma_min) / np.log(self.sigma_max / self.sigma_min)

    def drift(self, z: np.ndarray, t) -> np.ndarray:
        """Forward drift f(z, t) = -beta(t) z / 2."""
        return -0.5 * as_column(self.beta(t), z) * z

    @property
    def prior_std(self) -> float:
        """Standard deviation of the analytic prior at T."""
        return 1.0 if self.kind == SdeKind.VP else float(self.sigma_max)

    # ------------------------------------------------------ time bookkeeping
    def check_time(self, t, param_name: str = "t") -> np.ndarray:
        """Validate that every time lies in [eps, T].

        Raises:
            InvalidParameterException: If a time falls outside the horizon
        """
        t = np.asarray(t, dtype=np.float64)
        if t.size and (
            np.min(t) < self.eps - TIME_TOLERANCE or np.max(t) > self.T + TIME_TOLERANCE
        ):
            raise InvalidParameterException(
                f"Times must lie in [{self.eps}, {self.T}], got range "
                f"[{float(np.min(t))}, {float(np.max(t))}]",
                param_name=param_name,
            )
        return t

    def importance_antiderivative(self, t) -> np.ndarray:
        """Antiderivative of g^2 / sigma^2 (VP: log(exp(int beta) - 1))."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == SdeKind.VE:
            return 2.0 * np.log(self.sigma_max / self.sigma_min) * t
        ib = self.int_beta(t)
        return ib + np.log(-np.expm1(-ib))

    @property
    def importance_normalizer(self) -> float:
        """Z = integral of g^2 / sigma^2 over [eps, T]."""
        return float(
            self.importance_antiderivative(self.T) - self.importance_antiderivative(self.eps)
        )


class PriorKind(str, Enum):
    """Available priors at the terminal time."""

    STANDARD_NORMAL = "standard-normal"
    EMPIRICAL = "empirical"


@dataclass(frozen=True, eq=False)
class PriorSpec(BaseModel):
    """Prior at T: analytic isotropic Gaussian or a bank of latent z_T samples."""

    kind: PriorKind = PriorKind.STANDARD_NORMAL
    scale: float = 1.0
    bank: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if self.kind == PriorKind.EMPIRICAL and (self.bank is None or len(self.bank) == 0):
            raise InvalidParameterException(
                "Empirical prior needs a non-empty sample bank", param_name="bank"
            )

    @classmethod
    def for_schedule(cls, schedule: SdeSchedule) -> "PriorSpec":
        return cls(kind=PriorKind.STANDARD_NORMAL, scale=schedule.prior_std)


def as_column(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Reshape per-sample scalars so they broadcast against a (n, d) batch."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape((-1,) + (1,) * (np.ndim(like) - 1))

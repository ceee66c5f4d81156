"""Diagnostics of the induced data-space diffusion and of latent transport geometry."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from indm_core.autodiff.tensor import Value, no_grad
from indm_core.exceptions.indm_exceptions import InvalidParameterException, NonFiniteException
from indm_core.metrics import wasserstein2_squared
from indm_core.models.results import (
    CosineCurve,
    EigenSpectrum,
    InducedCoefficients,
    ManifoldNorms,
    RelativeEnergy,
)
from indm_core.models.schedule import SdeSchedule
from indm_core.nn.flow import FlowTransform, flow_inverse_jacobians
from indm_core.nn.score import ScoreFn
from indm_core.ode import integrate_probability_flow, ode_velocity
from indm_core.utils.helpers import subsample

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
MAX_ASSIGNMENT_POINTS = 1000
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _latents(flow: FlowTransform, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return flow.forward(x)[0].data


def inverse_laplacian(flow: FlowTransform, z: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """``sum_j d^2 h^-1 / dz_j^2`` per point by central differences of the inverse Jacobian."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    n, d = z.shape
    lap = np.zeros((n, d))
    for j in range(d):
        shift = np.zeros(d)
        shift[j] = step
        jac_plus = flow_inverse_jacobians(flow, z + shift)
        jac_minus = flow_inverse_jacobians(flow, z - shift)
        lap += (jac_plus[:, :, j] - jac_minus[:, :, j]) / (2.0 * step)
    return lap


def induced_coefficients(
    flow: FlowTransform, schedule: SdeSchedule, x: np.ndarray, t: float
) -> InducedCoefficients:
    """Drift, volatility and covariance of the data-space SDE induced by h.

    With ``z = h(x)`` and ``J = d h^-1 / dz``: drift
    ``J (-beta z / 2) + g^2 lap(h^-1) / 2``, volatility ``g J`` and
    covariance ``g^2 J J^T``. A single point gives unbatched arrays.

    Raises:
        NonFiniteException: If the inverse Jacobian is not finite
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    t = float(schedule.check_time(t))
    z = _latents(flow, x)
    jac_inv = flow_inverse_jacobians(flow, z)
    if not np.all(np.isfinite(jac_inv)):
        raise NonFiniteException("inverse flow Jacobian", context={"t": t})
    beta = float(schedule.beta(t))
    g2 = float(schedule.g2(t))
    drift = np.einsum("nij,nj->ni", jac_inv, -0.5 * beta * z)
    drift = drift + 0.5 * g2 * inverse_laplacian(flow, z)
    volatility = np.sqrt(g2) * jac_inv
    covariance = np.einsum("nij,nkj->nik", volatility, volatility)
    if single:
        return InducedCoefficients(drift=drift[0], volatility=volatility[0], covariance=covariance[0])
    return InducedCoefficients(drift=drift, volatility=volatility, covariance=covariance)


def covariance_eigen_spectrum(
    flow: FlowTransform, schedule: SdeSchedule, points: np.ndarray, t: float
) -> EigenSpectrum:
    """Sorted eigenvalues of ``G G^T / g^2`` at each point, with summary quantiles."""
    t = float(schedule.check_time(t))
    z = _latents(flow, np.atleast_2d(np.asarray(points, dtype=np.float64)))
    jac_inv = flow_inverse_jacobians(flow, z)
    normalized = np.einsum("nij,nkj->nik", jac_inv, jac_inv)
    eigenvalues = np.linalg.eigvalsh(normalized)
    quantiles = {f"q{int(q * 100):02d}": float(np.quantile(eigenvalues, q)) for q in QUANTILES}
    return EigenSpectrum(t=t, eigenvalues=eigenvalues, quantiles=quantiles)


def chord_cosines(states: np.ndarray) -> CosineCurve:
    """Mean ``cos(z_k - z_0, z_K - z_0)`` per checkpoint of (K+1, n, d) paths.

    Paths with a zero-length chord are skipped; the starting checkpoint is
    not reported and the curve's times are checkpoint indices 1..K.
    """
    states = np.asarray(states, dtype=np.float64)
    chord = states[-1] - states[0]
    chord_norm = np.linalg.norm(chord, axis=1)
    keep = chord_norm > 0.0
    n_skipped = int(np.sum(~keep))
    if n_skipped:
        logger.warning(f"Skipped {n_skipped} trajectories with a zero-length chord")
    cosine = np.full(states.shape[0] - 1, np.nan)
    if np.any(keep):
        for k in range(1, states.shape[0]):
            step = states[k, keep] - states[0, keep]
            step_norm = np.linalg.norm(step, axis=1)
            valid = step_norm > 0.0
            if np.any(valid):
                dots = np.sum(step[valid] * chord[keep][valid], axis=1)
                cosine[k - 1] = np.mean(dots / (step_norm[valid] * chord_norm[keep][valid]))
    return CosineCurve(times=np.arange(1, states.shape[0], dtype=np.float64), cosine=cosine, n_skipped=n_skipped)


def trajectory_cosine_similarity(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    n_checkpoints: int = 20,
    rtol: float = 1e-5,
    use_ema: bool = False,
) -> CosineCurve:
    """Cosine between each probability-flow path and its endpoint chord over time."""
    if n_checkpoints < 2:
        raise InvalidParameterException("n_checkpoints must be >= 2", "n_checkpoints")
    z0 = _latents(flow, np.asarray(x0, dtype=np.float64))
    times = np.linspace(schedule.eps, schedule.T, n_checkpoints)
    solution = integrate_probability_flow(
        score, schedule, z0, schedule.eps, schedule.T, rtol=rtol, t_eval=times, use_ema=use_ema
    )
    curve = chord_cosines(solution.states)
    return CosineCurve(times=solution.times[1:], cosine=curve.cosine, n_skipped=curve.n_skipped)


def manifold_norms(flow: FlowTransform, x: np.ndarray, schedule: SdeSchedule) -> ManifoldNorms:
    """Average squared norms of data and latents, with the prior's value ``d s^2``."""
    x = np.asarray(x, dtype=np.float64)
    z = _latents(flow, x)
    return ManifoldNorms(
        data_norm=float(np.mean(np.sum(x**2, axis=1))),
        latent_norm=float(np.mean(np.sum(z**2, axis=1))),
        prior_reference=float(x.shape[1] * schedule.prior_std**2),
    )


def relative_energy_from_paths(
    times: np.ndarray, states: np.ndarray, velocities: np.ndarray
) -> RelativeEnergy:
    """``R = L int E|v|^2 dt / W_2^2(start, end)`` for paths on an increasing time grid.

    Args:
        times: Checkpoint times, shape (K,)
        states: Positions at the checkpoints, shape (K, n, d)
        velocities: Velocities at the checkpoints, shape (K, n, d)

    Raises:
        SolverException: If the assignment solver fails
    """
    times = np.asarray(times, dtype=np.float64)
    mean_sq_speed = np.mean(np.sum(np.asarray(velocities) ** 2, axis=2), axis=1)
    duration = float(times[-1] - times[0])
    kinetic = duration * float(integrate.trapezoid(mean_sq_speed, times))
    w2 = wasserstein2_squared(states[0], states[-1])
    ratio = kinetic / w2 if w2 > 0 else float("inf")
    return RelativeEnergy(kinetic=kinetic, w2_squared=w2, ratio=ratio)


def relative_energy_of_field(
    velocity: Callable[[np.ndarray, float], np.ndarray],
    z0: np.ndarray,
    t0: float,
    t1: float,
    n_checkpoints: int = 101,
    rtol: float = 1e-6,
) -> RelativeEnergy:
    """Relative energy of the transport ``dz/dt = velocity(z, t)`` started at z0."""
    z0 = np.asarray(z0, dtype=np.float64)
    n, d = z0.shape
    times = np.linspace(t0, t1, n_checkpoints)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return velocity(y.reshape(n, d), t).reshape(-1)

    solution = integrate.solve_ivp(
        rhs, (t0, t1), z0.reshape(-1), method="RK45", rtol=rtol, atol=0.1 * rtol, t_eval=times
    )
    states = solution.y.T.reshape(len(times), n, d)
    velocities = np.stack([velocity(states[k], times[k]) for k in range(len(times))])
    return relative_energy_from_paths(times, states, velocities)


def relative_energy(
    flow: FlowTransform,
    score: ScoreFn,
    schedule: SdeSchedule,
    x0: np.ndarray,
    n_checkpoints: int = 101,
    rtol: float = 1e-5,
    use_ema: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> RelativeEnergy:
    """Relative energy of the probability-flow transport of the latent data.

    Uses at most 1000 points so the endpoint W_2^2 is solved exactly.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    x0 = subsample(x0, MAX_ASSIGNMENT_POINTS, rng)
    z0 = _latents(flow, x0)
    times = np.linspace(schedule.eps, schedule.T, n_checkpoints)
    solution = integrate_probability_flow(
        score, schedule, z0, schedule.eps, schedule.T, rtol=rtol, t_eval=times, use_ema=use_ema
    )
    field_at = ode_velocity(score, schedule, use_ema)
    with no_grad():
        velocities = np.stack(
            [field_at(float(t))(Value(state)).data for t, state in zip(solution.times, solution.states)]
        )
    result = relative_energy_from_paths(solution.times, solution.states, velocities)
    logger.info(f"Relative energy R={result.ratio:.4f} (K={result.kinetic:.4f}, W2^2={result.w2_squared:.4f})")
    return result


class DiagnosticsService:
    """Read-only analysis of a trained flow and latent score."""

    def __init__(self, flow: FlowTransform, score: ScoreFn, schedule: SdeSchedule):
        """Initialize with the models to analyse.

        Args:
            flow: The flow h
            score: Latent score field
            schedule: Linear latent SDE
        """
        self.flow = flow
        self.score = score
        self.schedule = schedule

    def induced_coefficients(self, x: np.ndarray, t: float) -> InducedCoefficients:
        return induced_coefficients(self.flow, self.schedule, x, t)

    def eigen_spectra(self, points: np.ndarray, times: Sequence[float]) -> list:
        """Covariance spectra at several diffusion times."""
        return [covariance_eigen_spectrum(self.flow, self.schedule, points, t) for t in times]

    def cosine_curve(self, x0: np.ndarray, n_checkpoints: int = 20, use_ema: bool = False) -> CosineCurve:
        return trajectory_cosine_similarity(
            self.flow, self.score, self.schedule, x0, n_checkpoints, use_ema=use_ema
        )

    def manifold_norms(self, x: np.ndarray) -> ManifoldNorms:
        return manifold_norms(self.flow, x, self.schedule)

    def relative_energy(self, x0: np.ndarray, use_ema: bool = False) -> RelativeEnergy:
        return relative_energy(self.flow, self.score, self.schedule, x0, use_ema=use_ema)

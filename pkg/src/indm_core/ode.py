"""Probability-flow ODE integration of the latent SDE with scipy's RK45.

The latent velocity is the lambda = 0 member of the reverse family,
``v(z, t) = -beta(t) z / 2 - g^2(t) s(z, t) / 2``. Integrating
``d log p / dt = -div v`` along a path gives the instantaneous
change-of-variables formula used by the likelihood service.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from indm_core.autodiff.functional import field_and_divergence
from indm_core.autodiff.tensor import Value, no_grad
from indm_core.exceptions.indm_exceptions import NonFiniteException, SolverException
from indm_core.models.schedule import SdeSchedule
from indm_core.nn.score import ScoreFn, time_column
from indm_core.sde import reverse_sde_drift

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 100_000
# Dormand-Prince evaluates the field six times per accepted or rejected step.
EVALS_PER_STEP = 6


@dataclass
class OdeSolution:
    """End state, accumulated divergence integral and optional checkpoints.

    ``div_integral`` is ``int div v dt`` from ``t_start`` to ``t_end`` per
    sample; ``states`` has shape (len(times), n, d) when checkpoints were
    requested.
    """

    z_end: np.ndarray
    div_integral: np.ndarray
    nfev: int
    times: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None


def ode_velocity(score: ScoreFn, schedule: SdeSchedule, use_ema: bool = False):
    """Row-wise velocity field ``z -> v(z, t)`` for a fixed time ``t``."""

    def field_at(t: float):
        def field(z: Value) -> Value:
            tt = time_column(t, z.shape[0])
            return reverse_sde_drift(schedule, z, tt, score(z, tt, use_ema=use_ema), lam=0.0)

        return field

    return field_at


def integrate_probability_flow(
    score: ScoreFn,
    schedule: SdeSchedule,
    z: np.ndarray,
    t_start: float,
    t_end: float,
    rtol: float = 1e-5,
    atol: Optional[float] = None,
    t_eval: Optional[Sequence[float]] = None,
    use_ema: bool = False,
    with_divergence: bool = False,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> OdeSolution:
    """Integrate the probability-flow ODE from ``t_start`` to ``t_end``.

    Both directions are supported; sampling runs backward from T, the
    likelihood forward from eps.

    Args:
        score: Latent score field
        schedule: Linear latent SDE
        z: Initial latents, shape (n, d)
        t_start: Initial time
        t_end: Final time
        rtol: Relative tolerance of RK45
        atol: Absolute tolerance (defaults to ``rtol / 10``)
        t_eval: Times at which to record states
        use_ema: Evaluate the score with its EMA weights
        with_divergence: Also integrate the exact divergence of v
        max_steps: Solver step budget

    Returns:
        OdeSolution for the batch

    Raises:
        SolverException: If RK45 fails or exceeds the step budget
        NonFiniteException: If the velocity becomes non-finite
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    atol = rtol * 0.1 if atol is None else atol
    field_at = ode_velocity(score, schedule, use_ema)
    max_evals = EVALS_PER_STEP * max_steps
    counter = {"nfev": 0}

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        counter["nfev"] += 1
        if counter["nfev"] > max_evals:
            raise SolverException(
                f"RK45 exceeded {max_steps} steps",
                context={"nfev": counter["nfev"], "t": float(t), "max_steps": max_steps},
            )
        # RK45 probes slightly past the interval ends.
        t_clip = float(np.clip(t, schedule.eps, schedule.T))
        state = y[: n * d].reshape(n, d)
        field = field_at(t_clip)
        if with_divergence:
            v, div = field_and_divergence(field, state)
        else:
            with no_grad():
                v = field(Value(state)).data
            div = np.zeros(n)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(div))):
            logger.error(f"Non-finite ODE velocity at t={t_clip:.6g}")
            raise NonFiniteException("probability-flow velocity", context={"t": t_clip})
        return np.concatenate([v.reshape(-1), div])

    y0 = np.concatenate([z.reshape(-1), np.zeros(n)])
    eval_points = None if t_eval is None else np.asarray(t_eval, dtype=np.float64)
    solution = integrate.solve_ivp(
        rhs,
        (float(t_start), float(t_end)),
        y0,
        method="RK45",
        rtol=rtol,
        atol=atol,
        t_eval=eval_points,
    )
    if not solution.success:
        logger.error(f"RK45 failed: {solution.message}")
        raise SolverException(
            f"RK45 failed: {solution.message}",
            context={"status": int(solution.status), "nfev": int(solution.nfev)},
        )
    logger.debug(f"RK45 from t={t_start:.3g} to t={t_end:.3g}: {solution.nfev} evaluations")

    y_end = solution.y[:, -1]
    times = states = None
    if eval_points is not None:
        times = solution.t
        states = solution.y[: n * d].T.reshape(len(times), n, d)
        # the solver only hits t_end when it is one of the requested times
        if times.size == 0 or not np.isclose(times[-1], t_end):
            y_end = _final_state(rhs, t_start, t_end, y0, rtol, atol)
    return OdeSolution(
        z_end=y_end[: n * d].reshape(n, d),
        div_integral=y_end[n * d :],
        nfev=int(solution.nfev),
        times=times,
        states=states,
    )


def _final_state(rhs, t_start: float, t_end: float, y0: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    solution = integrate.solve_ivp(rhs, (t_start, t_end), y0, method="RK45", rtol=rtol, atol=atol)
    if not solution.success:
        raise SolverException(
            f"RK45 failed: {solution.message}",
            context={"status": int(solution.status), "nfev": int(solution.nfev)},
        )
    return solution.y[:, -1]

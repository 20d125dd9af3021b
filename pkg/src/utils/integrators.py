"""Runge-Kutta drivers for first-order systems y' = f(t, y).

Both drivers stop at the first MechanicsError raised by the right-hand side and
hand back the samples accepted so far together with the error text.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.integrate import RK45

from utils.errors import ConfigError, MechanicsError

logger = logging.getLogger(__name__)

METHODS = ("rk4", "rk45")


@dataclass
class IntegrationOutcome:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    error: str | None = None
    step: float | None = None

    def append(self, t, y):
        self.times.append(float(t))
        self.states.append(np.array(y, dtype=float))


def rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def uniform_steps(t0, t1, dt):
    """Number of steps and the uniform step that lands exactly on t1."""
    steps = max(1, int(round((t1 - t0) / dt)))
    return steps, (t1 - t0) / steps


def integrate_fixed(rhs, t0, y0, t1, dt):
    steps, h = uniform_steps(t0, t1, dt)
    outcome = IntegrationOutcome(step=h)
    y = np.array(y0, dtype=float)
    try:
        rhs(t0, y)
        outcome.append(t0, y)
        for k in range(steps):
            t = t0 + k * h
            y = rk4_step(rhs, t, y, h)
            if not np.all(np.isfinite(y)):
                outcome.error = f"non-finite state at t={t + h:.17g}"
                break
            outcome.append(t1 if k == steps - 1 else t0 + (k + 1) * h, y)
    except MechanicsError as exc:
        outcome.error = str(exc)
    if outcome.error:
        logger.warning("RK4 stopped after %d samples: %s", len(outcome.times), outcome.error)
    return outcome


def integrate_adaptive(rhs, t0, y0, t1, rtol, atol, dt_min, dt_max=None):
    """Dormand-Prince 5(4) with scipy's stepper; every accepted step becomes a sample."""
    outcome = IntegrationOutcome()
    y = np.array(y0, dtype=float)
    try:
        rhs(t0, y)
        outcome.append(t0, y)
        solver = RK45(
            rhs,
            t0,
            y,
            t1,
            rtol=rtol,
            atol=atol,
            max_step=dt_max if dt_max else np.inf,
        )
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                outcome.error = f"step size underflow at t={solver.t:.17g}: {message}"
                break
            outcome.append(solver.t, solver.y)
            if solver.status == "running" and solver.step_size is not None:
                if solver.step_size < dt_min:
                    outcome.error = (
                        f"step size underflow at t={solver.t:.17g} "
                        f"(h={solver.step_size:.3g} < dt_min={dt_min:.3g})"
                    )
                    break
    except MechanicsError as exc:
        outcome.error = str(exc)
    if outcome.error:
        logger.warning("RK45 stopped after %d samples: %s", len(outcome.times), outcome.error)
    return outcome


def solve(rhs, y0, cfg, t0=None, t1=None):
    """Integrate with the method named in cfg over [t0, t1] (defaults from cfg)."""
    t0 = cfg.t0 if t0 is None else t0
    t1 = cfg.t1 if t1 is None else t1
    match cfg.method:
        case "rk4":
            return integrate_fixed(rhs, t0, y0, t1, cfg.dt)
        case "rk45":
            return integrate_adaptive(rhs, t0, y0, t1, cfg.rtol, cfg.atol, cfg.dt_min, cfg.dt_max)
    raise ConfigError(f"unknown integrator method '{cfg.method}' (expected one of {METHODS})")


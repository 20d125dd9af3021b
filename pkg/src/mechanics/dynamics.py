"""Unconstrained Newton dynamics: right-hand side, integration, energies and residual checks."""

import dataclasses
from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd

from mechanics.geometry import connection_at, differential, factor_metric, metric_jet
from mechanics.system import Covector
from utils.errors import (
    ConfigError,
    IntegrationError,
    SystemDefinitionError,
    TrajectoryTooShortError,
)
from utils.integrators import METHODS, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseState:
    t: float
    q: np.ndarray
    v: np.ndarray

    @classmethod
    def create(cls, sys, q, v, t=0.0):
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if q.shape != (sys.n,) or v.shape != (sys.n,):
            raise SystemDefinitionError(
                f"state needs {sys.n} coordinates and {sys.n} velocities, "
                f"got {q.size} and {v.size}"
            )
        return cls(float(t), q, v)


@dataclass(frozen=True)
class IntegratorConfig:
    t0: float = 0.0
    t1: float = 1.0
    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-12
    dt_min: float = 1e-12
    dt_max: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown integrator method '{self.method}'")
        if not self.t1 > self.t0:
            raise ConfigError(f"t1 ({self.t1}) must be greater than t0 ({self.t0})")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if not (self.rtol > 0.0 and self.atol > 0.0 and self.dt_min > 0.0):
            raise ConfigError("tolerances must be positive")
        if self.dt_max is not None and not self.dt_max > 0.0:
            raise ConfigError("dt_max must be positive")

    @classmethod
    def from_config(cls, config, **overrides):
        names = {f.name for f in dataclasses.fields(cls)}
        values = {k: v for k, v in config.get("integrator", {}).items() if k in names}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class Trajectory:
    """Samples of a run plus per-sample diagnostics.

    Constraint arrays are None for unconstrained runs; ``energy`` equals the
    kinetic energy when ``has_potential`` is False.
    """

    system_name: str
    coords: tuple
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    kinetic: np.ndarray
    energy: np.ndarray
    method: str
    step: float | None = None
    has_potential: bool = False
    constraint_kind: str | None = None
    constraint_names: tuple = ()
    phi: np.ndarray | None = None
    phi_rate: np.ndarray | None = None
    multipliers: np.ndarray | None = None
    constraint_force: np.ndarray | None = None
    control_names: tuple = ()
    inputs: np.ndarray | None = None
    error: str | None = None

    def __len__(self):
        return len(self.times)

    def state(self, index):
        return PhaseState(float(self.times[index]), self.q[index], self.v[index])

    def states(self):
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self):
        return self.state(-1)

    def control_values(self, index):
        if self.inputs is None:
            return None
        return dict(zip(self.control_names, self.inputs[index]))

    def raise_for_error(self):
        if self.error:
            raise IntegrationError(
                f"integration stopped at t={self.times[-1]:.17g}: {self.error}", trajectory=self
            )
        return self

    def to_frame(self):
        columns = {"t": self.times}
        for k, name in enumerate(self.coords):
            columns[f"q:{name}"] = self.q[:, k]
        for k, name in enumerate(self.coords):
            columns[f"v:{name}"] = self.v[:, k]
        columns["K"] = self.kinetic
        columns["E"] = self.energy
        if self.phi is not None:
            for a, name in enumerate(self.constraint_names):
                columns[f"phi:{name}"] = self.phi[:, a]
            for a, name in enumerate(self.constraint_names):
                columns[f"lambda:{name}"] = self.multipliers[:, a]
        if self.constraint_force is not None:
            for k, name in enumerate(self.coords):
                columns[f"R:{name}"] = self.constraint_force[:, k]
        if self.inputs is not None:
            for i, name in enumerate(self.control_names):
                columns[f"u:{name}"] = self.inputs[:, i]
        return pd.DataFrame(columns)


# ---------------------------------------------------------------------------
# Forces and the Newton right-hand side
# ---------------------------------------------------------------------------


def _values(comps, bindings):
    return np.array([c.evaluate(bindings) for c in comps])


def effective_force(sys, s, factor=None, controls=None):
    """F = −grad V + F + sharp(ω) + Σ u_i F^i, evaluated at the phase point.

    ``controls`` maps control-field names to input values.
    """
    n = sys.n
    bindings = sys.bindings(s.q, s.v, s.t)
    vector = np.zeros(n)
    covector = np.zeros(n)
    if sys.potential is not None:
        covector -= differential(sys, sys.potential, s.q, s.v, s.t)
    if sys.work_form is not None:
        covector += _values(sys.work_form, bindings)
    if sys.force is not None:
        vector += _values(sys.force, bindings)
    for name, u in (controls or {}).items():
        if u:
            vector += u * _values(sys.vector_field(name), bindings)
    if np.any(covector):
        factor = factor or factor_metric(sys, s.q)
        vector += factor.raise_index(covector)
    return vector


def acceleration(sys, s, controls=None, connection=None):
    factor, christoffel = connection or connection_at(sys, s.q)
    return effective_force(sys, s, factor, controls) - christoffel.contract(s.v, s.v)


def newton_rhs(sys, s):
    """(dq, dv) with dq = v and dv^k = F^k − Γ^k_ij v^i v^j."""
    return np.array(s.v, dtype=float), acceleration(sys, s)


def phase_rhs(sys, accel):
    """Wrap a state-level acceleration as y' = f(t, y) with y = (q, v)."""
    n = sys.n

    def rhs(t, y):
        s = PhaseState(t, y[:n], y[n:])
        return np.concatenate([s.v, accel(s)])

    return rhs


# ---------------------------------------------------------------------------
# Energies and momenta
# ---------------------------------------------------------------------------


def kinetic_energy(sys, s):
    G = factor_metric(sys, s.q).matrix
    return float(0.5 * s.v @ G @ s.v)


def potential_energy(sys, s):
    if sys.potential is None:
        return 0.0
    return sys.potential.evaluate(sys.bindings(s.q, s.v, s.t))


def total_energy(sys, s):
    """K + V; only K when no potential is declared (see Trajectory.has_potential)."""
    return kinetic_energy(sys, s) + potential_energy(sys, s)


def lagrangian(sys, s):
    return kinetic_energy(sys, s) - potential_energy(sys, s)


def linear_momentum(sys, s):
    G = factor_metric(sys, s.q).matrix
    return Covector(s.q, G @ s.v)


def covariant_momentum_rate(sys, s, controls=None):
    """∇_γ̇ (i_γ̇ g) along the Newton flow through s; equals flat(F)."""
    G, dG, _ = metric_jet(sys, s.q, order=1)
    factor, christoffel = connection_at(sys, s.q)
    a = acceleration(sys, s, controls, (factor, christoffel))
    p = G @ s.v
    p_dot = np.einsum("kij,k,j->i", dG, s.v, s.v) + G @ a
    return p_dot - np.einsum("kij,i,k->j", christoffel.gamma, s.v, p)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def build_trajectory(sys, outcome, cfg, **diagnostics):
    n = sys.n
    states = np.array(outcome.states).reshape(-1, 2 * n)
    times = np.array(outcome.times)
    q, v = states[:, :n], states[:, n:]
    kinetic = np.empty(len(times))
    energy = np.empty(len(times))
    for i, t in enumerate(times):
        s = PhaseState(t, q[i], v[i])
        kinetic[i] = kinetic_energy(sys, s)
        energy[i] = kinetic[i] + potential_energy(sys, s)
    return Trajectory(
        system_name=sys.name,
        coords=sys.coords,
        times=times,
        q=q,
        v=v,
        kinetic=kinetic,
        energy=energy,
        method=cfg.method,
        step=outcome.step,
        has_potential=sys.potential is not None,
        error=outcome.error,
        **diagnostics,
    )


def check_interval(s0, cfg):
    if not cfg.t1 > s0.t:
        raise ConfigError(f"t1 ({cfg.t1}) must be greater than the initial time ({s0.t})")


def integrate(sys, s0, cfg):
    """Integrate the Newton equation from s0 to cfg.t1.

    A metric or expression failure mid-run ends the run; the samples up to the
    failure are returned with ``error`` set.
    """
    check_interval(s0, cfg)
    logger.info("Integrating %s with %s on [%g, %g]", sys.name, cfg.method, s0.t, cfg.t1)
    rhs = phase_rhs(sys, lambda s: acceleration(sys, s))
    outcome = solve(rhs, np.concatenate([s0.q, s0.v]), cfg, t0=s0.t)
    trajectory = build_trajectory(sys, outcome, cfg)
    logger.info("Integration finished with %d samples", len(trajectory))
    return trajectory


# ---------------------------------------------------------------------------
# Residual checks along stored trajectories
# ---------------------------------------------------------------------------


def require_samples(traj, count=3):
    if len(traj) < count:
        raise TrajectoryTooShortError(
            f"trajectory has {len(traj)} samples, at least {count} are needed"
        )


def _central_difference(values, times):
    return (values[2:] - values[:-2]) / (times[2:] - times[:-2])[:, None]


def euler_lagrange_residual(sys, traj):
    """d/dt(∂K/∂v^j) − ∂K/∂q^j − ω_j − (constraint term)_j at interior samples.

    The constraint term is flat(R) for constrained trajectories, i.e. λ_α dφ_α
    or λ_α d^Vφ^α.
    """
    require_samples(traj)
    m = len(traj)
    momenta = np.array([factor_metric(sys, traj.q[i]).lower(traj.v[i]) for i in range(m)])
    momenta_rate = _central_difference(momenta, traj.times)
    residual = np.empty((m - 2, sys.n))
    for i in range(1, m - 1):
        s = traj.state(i)
        G, dG, _ = metric_jet(sys, s.q, order=1)
        factor = factor_metric(sys, s.q, G)
        dK_dq = 0.5 * np.einsum("kij,i,j->k", dG, s.v, s.v)
        omega = G @ effective_force(sys, s, factor, traj.control_values(i))
        if traj.constraint_force is not None:
            omega = omega + G @ traj.constraint_force[i]
        residual[i - 1] = momenta_rate[i - 1] - dK_dq - omega
    return residual


def energy_drift_check(sys, traj):
    """dE/dt + ∂L/∂t at interior samples, with ∂L/∂t = −∂V/∂t from AD."""
    require_samples(traj)
    rate = _central_difference(traj.energy[:, None], traj.times)[:, 0]
    lagrangian_rate = np.zeros(len(rate))
    if sys.potential is not None and "t" in sys.potential.free_symbols:
        for i in range(1, len(traj) - 1):
            s = traj.state(i)
            lagrangian_rate[i - 1] = -sys.potential.partial("t", sys.bindings(s.q, s.v, s.t))
    return rate + lagrangian_rate


def newton_residual_along(sys, traj):
    """g-norm of ∇_γ̇γ̇ − F − R at interior samples, acceleration by central differences."""
    require_samples(traj)
    accelerations = _central_difference(traj.v, traj.times)
    norms = np.empty(len(accelerations))
    for i in range(1, len(traj) - 1):
        s = traj.state(i)
        factor, christoffel = connection_at(sys, s.q)
        r = accelerations[i - 1] + christoffel.contract(s.v, s.v)
        r -= effective_force(sys, s, factor, traj.control_values(i))
        if traj.constraint_force is not None:
            r -= traj.constraint_force[i]
        norms[i - 1] = np.sqrt(max(factor.inner(r, r), 0.0))
    return norms

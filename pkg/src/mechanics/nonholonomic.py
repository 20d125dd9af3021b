"""Velocity constraints φ^α(q, v) = 0 under the nonholonomic d'Alembert principle."""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg

from mechanics import dynamics
from mechanics.dynamics import PhaseState, acceleration, phase_rhs
from mechanics.expression import TIME
from mechanics.geometry import (
    GRAM_SCHMIDT_TOLERANCE,
    connection_at,
    factor_metric,
    orthonormal_split,
)
from mechanics.system import Covector, TangentVector
from utils.errors import ConstraintViolationError, RankDeficiencyError, SystemDefinitionError
from utils.integrators import solve

logger = logging.getLogger(__name__)

DEFAULT_STABILIZATION = 5.0
STATE_TOLERANCE = 1e-10
SPECIALIZATION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class NonholonomicConstraintSet:
    constraints: tuple

    @classmethod
    def from_system(cls, sys):
        ncs = cls(tuple(sys.nonholonomic))
        if ncs.r >= sys.n:
            raise SystemDefinitionError(
                f"{ncs.r} velocity constraints in dimension {sys.n} leave no virtual velocities"
            )
        return ncs

    @property
    def r(self):
        return len(self.constraints)

    @property
    def names(self):
        return tuple(c.name for c in self.constraints)

    @property
    def linear(self):
        return self.r > 0 and all(c.kind == "linear" for c in self.constraints)

    def values(self, sys, s):
        bindings = sys.bindings(s.q, s.v, s.t)
        return np.array([c.expr.evaluate(bindings) for c in self.constraints])

    def jets(self, sys, s):
        """φ, ∂φ/∂q (r×n), d^Vφ = ∂φ/∂v (r×n) and ∂φ/∂t."""
        n = sys.n
        seeds = sys.coords + sys.velocities + (TIME,)
        bindings = sys.bindings(s.q, s.v, s.t)
        phi = np.zeros(self.r)
        Dq = np.zeros((self.r, n))
        Dv = np.zeros((self.r, n))
        Dt = np.zeros(self.r)
        for a, c in enumerate(self.constraints):
            jet = c.expr.jet(bindings, seeds, order=1)
            phi[a] = jet.value
            Dq[a] = jet.grad[:n]
            Dv[a] = jet.grad[n : 2 * n]
            Dt[a] = jet.grad[2 * n]
        return phi, Dq, Dv, Dt


def _constraint(sys, phi):
    if isinstance(phi, str):
        for c in sys.nonholonomic:
            if c.name == phi:
                return c.expr
        raise SystemDefinitionError(f"unknown nonholonomic constraint '{phi}'")
    return getattr(phi, "expr", phi)


def vertical_differential(sys, phi, s):
    """d^Vφ with components ∂φ/∂v^i at (q, v)."""
    expr = _constraint(sys, phi)
    jet = expr.jet(sys.bindings(s.q, s.v, s.t), sys.velocities, order=1)
    return Covector(np.asarray(s.q, dtype=float), jet.grad)


def validate_specialization(sys, ncs, s, tol=SPECIALIZATION_TOLERANCE):
    """Check declared linear/affine constraints are a·v (+ b) at the state s.

    Second velocity derivatives must vanish; linear constraints must also vanish at v = 0.
    """
    bindings = sys.bindings(s.q, s.v, s.t)
    at_rest = sys.bindings(s.q, np.zeros(sys.n), s.t)
    for c in ncs.constraints:
        if c.kind == "general":
            continue
        hess = c.expr.jet(bindings, sys.velocities, order=2).hess
        if np.max(np.abs(hess)) > tol:
            raise SystemDefinitionError(
                f"constraint '{c.name}' is declared {c.kind} but is not affine in the velocities"
            )
        if c.kind == "linear" and abs(c.expr.evaluate(at_rest)) > tol:
            raise SystemDefinitionError(
                f"constraint '{c.name}' is declared linear but has a velocity-free term"
            )


def virtual_velocity_basis(sys, ncs, s, tol=GRAM_SCHMIDT_TOLERANCE):
    """g-orthonormal basis of the common kernel of the d^Vφ^α."""
    Dv = ncs.jets(sys, s)[2] if ncs.r else np.zeros((0, sys.n))
    split = orthonormal_split(sys, s.q, Dv, tol)
    return [TangentVector(np.asarray(s.q, dtype=float), w) for w in split.tangent_basis.T]


def _multipliers(sys, ncs, s, stabilization, connection=None):
    factor, christoffel = connection or connection_at(sys, s.q)
    phi, Dq, Dv, Dt = ncs.jets(sys, s)
    a0 = acceleration(sys, s, connection=(factor, christoffel))
    sharps = np.column_stack([factor.raise_index(row) for row in Dv])
    A = Dv @ sharps
    c = -(Dq @ s.v + Dt + Dv @ a0) - stabilization * phi
    try:
        lam = linalg.cho_solve(linalg.cho_factor(A, lower=True), c)
    except linalg.LinAlgError:
        raise RankDeficiencyError(
            f"vertical differentials are dependent at q={np.asarray(s.q).tolist()}, "
            f"v={np.asarray(s.v).tolist()}"
        ) from None
    return lam, sharps, a0, phi


def nonholo_multipliers(sys, ncs, s, stabilization=0.0):
    """λ solving A λ = c with A_αβ = g^-1(d^Vφ^α, d^Vφ^β), so that dφ^α/dt = −k φ^α."""
    if ncs.r == 0:
        return np.zeros(0)
    return _multipliers(sys, ncs, s, stabilization)[0]


def constraint_force(sys, ncs, s, lam):
    """R = Σ λ_α sharp(d^Vφ^α)."""
    q = np.asarray(s.q, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if ncs.r == 0 or not np.any(lam):
        return TangentVector(q, np.zeros(sys.n))
    _, _, Dv, _ = ncs.jets(sys, s)
    return TangentVector(q, factor_metric(sys, q).raise_index(Dv.T @ lam))


def check_initial_state(sys, ncs, s0, tol=STATE_TOLERANCE):
    if ncs.r == 0:
        return
    phi = ncs.values(sys, s0)
    worst = int(np.argmax(np.abs(phi)))
    if abs(phi[worst]) > tol:
        raise ConstraintViolationError(
            f"initial state violates constraint '{ncs.names[worst]}' by {abs(phi[worst]):.3g} "
            f"(tolerance {tol:.3g})"
        )


def integrate_nonholonomic(
    sys, ncs, s0, cfg, stabilization=DEFAULT_STABILIZATION, state_tolerance=STATE_TOLERANCE
):
    dynamics.check_interval(s0, cfg)
    if ncs.r == 0:
        return dynamics.integrate(sys, s0, cfg)
    check_initial_state(sys, ncs, s0, state_tolerance)
    validate_specialization(sys, ncs, s0)
    logger.info(
        "Integrating %s on %d velocity constraints, stabilization k=%g",
        sys.name,
        ncs.r,
        stabilization,
    )

    def constrained_acceleration(s):
        lam, sharps, a0, _ = _multipliers(sys, ncs, s, stabilization)
        return a0 + sharps @ lam

    outcome = solve(
        phase_rhs(sys, constrained_acceleration), np.concatenate([s0.q, s0.v]), cfg, t0=s0.t
    )
    n = sys.n
    rows = []
    for i, (t, y) in enumerate(zip(outcome.times, outcome.states)):
        s = PhaseState(t, y[:n], y[n:])
        try:
            lam, sharps, _, phi = _multipliers(sys, ncs, s, stabilization)
        except RankDeficiencyError as exc:
            del outcome.times[i:], outcome.states[i:]
            outcome.error = outcome.error or str(exc)
            break
        rows.append((phi, lam, sharps @ lam))
    if rows:
        phi, lam, force = (np.array(col) for col in zip(*rows))
    else:
        phi, lam, force = np.zeros((0, ncs.r)), np.zeros((0, ncs.r)), np.zeros((0, n))
    trajectory = dynamics.build_trajectory(
        sys,
        outcome,
        cfg,
        constraint_kind="nonholonomic",
        constraint_names=ncs.names,
        phi=phi,
        multipliers=lam,
        constraint_force=force,
    )
    logger.info(
        "Nonholonomic run finished: %d samples, max|phi| = %.3g",
        len(trajectory),
        float(np.max(np.abs(phi))) if phi.size else 0.0,
    )
    return trajectory


def dalembert_check(sys, ncs, s, R):
    """max |g(R, w)| over the virtual-velocity basis."""
    basis = virtual_velocity_basis(sys, ncs, s)
    if not basis:
        return 0.0
    factor = factor_metric(sys, s.q)
    R = np.asarray(R, dtype=float)
    return float(max(abs(factor.inner(R, w.components)) for w in basis))

"""Motion on a level-set submanifold S = {φ_α(q) = 0} with d'Alembert constraint forces.

The constrained equation is integrated in the ambient chart:
    q̈ = F − Γ(v, v) + Σ λ_α sharp(dφ_α)
with λ fixed by requiring d²φ_α/dt² = −2a dφ_α(v) − b² φ_α along the flow.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg

from mechanics import dynamics
from mechanics.dynamics import PhaseState, acceleration, effective_force, phase_rhs
from mechanics.geometry import (
    GRAM_SCHMIDT_TOLERANCE,
    connection_at,
    factor_metric,
    orthonormal_split,
)
from mechanics.system import TangentVector
from utils.errors import ConstraintViolationError, RankDeficiencyError, SystemDefinitionError
from utils.integrators import solve

logger = logging.getLogger(__name__)

DEFAULT_STABILIZATION = (5.0, 5.0)
PROJECTION_TOLERANCE = 1e-6
STATE_TOLERANCE = 1e-10
NEWTON_PROJECTION_STEPS = 20


@dataclass(frozen=True)
class HolonomicConstraintSet:
    names: tuple
    exprs: tuple

    @classmethod
    def from_system(cls, sys):
        cs = cls(tuple(sys.holonomic), tuple(sys.holonomic.values()))
        if cs.h >= sys.n:
            raise SystemDefinitionError(
                f"{cs.h} holonomic constraints leave no motion in dimension {sys.n}"
            )
        return cs

    @property
    def h(self):
        return len(self.names)

    def values(self, sys, q):
        bindings = sys.bindings(q)
        return np.array([e.evaluate(bindings) for e in self.exprs])

    def jets(self, sys, q, order=1):
        """φ, D[α, j] = ∂_j φ_α and (order 2) H[α, i, j] = ∂_i ∂_j φ_α."""
        n = sys.n
        bindings = sys.bindings(q)
        phi = np.zeros(self.h)
        D = np.zeros((self.h, n))
        H = np.zeros((self.h, n, n)) if order >= 2 else None
        for a, expr in enumerate(self.exprs):
            jet = expr.jet(bindings, sys.coords, order=order)
            phi[a] = jet.value
            D[a] = jet.grad
            if H is not None:
                H[a] = jet.hess
        return phi, D, H


@dataclass(frozen=True)
class ConstraintDiagnostics:
    phi: np.ndarray
    phi_rate: np.ndarray
    multipliers: np.ndarray
    force: np.ndarray


def tangent_projector(sys, cs, q, tol=GRAM_SCHMIDT_TOLERANCE):
    """(P, P⊥): g-orthogonal projectors onto T_qS and its complement."""
    q = np.asarray(q, dtype=float)
    if cs.h == 0:
        return np.eye(sys.n), np.zeros((sys.n, sys.n))
    _, D, _ = cs.jets(sys, q)
    split = orthonormal_split(sys, q, D, tol)
    return split.tangent_projector, split.normal_projector


def tangent_basis(sys, cs, q, tol=GRAM_SCHMIDT_TOLERANCE):
    q = np.asarray(q, dtype=float)
    D = cs.jets(sys, q)[1] if cs.h else np.zeros((0, sys.n))
    return orthonormal_split(sys, q, D, tol).tangent_basis


def project_force(sys, cs, q, v=None, t=0.0):
    """F^S = P F, the tangential part of the applied force."""
    q = np.asarray(q, dtype=float)
    v = np.zeros(sys.n) if v is None else np.asarray(v, dtype=float)
    force = effective_force(sys, PhaseState(t, q, v))
    P, _ = tangent_projector(sys, cs, q)
    return TangentVector(q, P @ force)


def _gram(D, factor):
    """g^-1(dφ_α, dφ_β) and the vectors sharp(dφ_α) as columns."""
    sharps = np.column_stack([factor.raise_index(row) for row in D])
    return D @ sharps, sharps


def _solve_gram(gram, rhs, q):
    try:
        return linalg.cho_solve(linalg.cho_factor(gram, lower=True), rhs)
    except linalg.LinAlgError:
        raise RankDeficiencyError(
            f"constraint Gram matrix is singular at q={np.asarray(q).tolist()}"
        ) from None


def _multipliers(sys, cs, s, stabilization, connection=None):
    factor, christoffel = connection or connection_at(sys, s.q)
    phi, D, H = cs.jets(sys, s.q, order=2)
    a0 = acceleration(sys, s, connection=(factor, christoffel))
    gram, sharps = _gram(D, factor)
    a, b = stabilization
    rate = D @ s.v
    rhs = -(D @ a0 + np.einsum("aij,i,j->a", H, s.v, s.v)) - 2.0 * a * rate - b * b * phi
    lam = _solve_gram(gram, rhs, s.q)
    return lam, sharps, a0, phi, rate


def holonomic_multipliers(sys, cs, s, stabilization=(0.0, 0.0), tol=PROJECTION_TOLERANCE):
    """λ with R = Σ λ_α sharp(dφ_α), from d²φ_α/dt² = 0 (plus optional Baumgarte terms)."""
    if cs.h == 0:
        return np.zeros(0)
    if tol is not None:
        worst = float(np.max(np.abs(cs.jets(sys, s.q)[1] @ s.v)))
        if worst > tol:
            raise ConstraintViolationError(
                f"velocity is not tangent to the constraint set (|dφ(v)| = {worst:.3g})"
            )
    return _multipliers(sys, cs, s, stabilization)[0]


def project_initial_state(
    sys, cs, s, state_tolerance=STATE_TOLERANCE, projection_tolerance=PROJECTION_TOLERANCE
):
    """Return s, or s moved onto TS when it is off by at most projection_tolerance."""
    if cs.h == 0:
        return s
    phi, D, _ = cs.jets(sys, s.q)
    violation = max(np.max(np.abs(phi)), np.max(np.abs(D @ s.v)))
    if violation <= state_tolerance:
        return s
    if violation > projection_tolerance:
        raise ConstraintViolationError(
            f"initial state violates the holonomic constraints by {violation:.3g} "
            f"(tolerance {projection_tolerance:.3g})"
        )
    q = np.array(s.q, dtype=float)
    for _ in range(NEWTON_PROJECTION_STEPS):
        phi, D, _ = cs.jets(sys, q)
        if np.max(np.abs(phi)) <= 1e-15:
            break
        gram, sharps = _gram(D, factor_metric(sys, q))
        q = q - sharps @ _solve_gram(gram, phi, q)
    P, _ = tangent_projector(sys, cs, q)
    logger.info("Projected initial state onto the constraint set (violation %.3g)", violation)
    return PhaseState(s.t, q, P @ s.v)


def _diagnostics(sys, cs, outcome, stabilization):
    """Per-sample φ, dφ(v), λ and R; trims the run at the first sample that cannot be evaluated."""
    n = sys.n
    rows = []
    for i, (t, y) in enumerate(zip(outcome.times, outcome.states)):
        s = PhaseState(t, y[:n], y[n:])
        try:
            lam, sharps, _, phi, rate = _multipliers(sys, cs, s, stabilization)
        except RankDeficiencyError as exc:
            del outcome.times[i:], outcome.states[i:]
            outcome.error = outcome.error or str(exc)
            break
        rows.append((phi, rate, lam, sharps @ lam))
    if not rows:
        return ConstraintDiagnostics(*(np.zeros((0, k)) for k in (cs.h, cs.h, cs.h, n)))
    return ConstraintDiagnostics(*(np.array(col) for col in zip(*rows)))


def integrate_holonomic(
    sys,
    cs,
    s0,
    cfg,
    stabilization=DEFAULT_STABILIZATION,
    projection_tolerance=PROJECTION_TOLERANCE,
    state_tolerance=STATE_TOLERANCE,
):
    dynamics.check_interval(s0, cfg)
    if cs.h == 0:
        trajectory = dynamics.integrate(sys, s0, cfg)
        trajectory.constraint_kind = "holonomic"
        trajectory.phi = np.zeros((len(trajectory), 0))
        trajectory.phi_rate = np.zeros((len(trajectory), 0))
        trajectory.multipliers = np.zeros((len(trajectory), 0))
        trajectory.constraint_force = np.zeros_like(trajectory.q)
        return trajectory
    s0 = project_initial_state(sys, cs, s0, state_tolerance, projection_tolerance)
    logger.info(
        "Integrating %s on %d holonomic constraints, stabilization a=%g b=%g",
        sys.name,
        cs.h,
        *stabilization,
    )

    def constrained_acceleration(s):
        connection = connection_at(sys, s.q)
        lam, sharps, a0, _, _ = _multipliers(sys, cs, s, stabilization, connection)
        return a0 + sharps @ lam

    outcome = solve(
        phase_rhs(sys, constrained_acceleration), np.concatenate([s0.q, s0.v]), cfg, t0=s0.t
    )
    diagnostics = _diagnostics(sys, cs, outcome, stabilization)
    trajectory = dynamics.build_trajectory(
        sys,
        outcome,
        cfg,
        constraint_kind="holonomic",
        constraint_names=cs.names,
        phi=diagnostics.phi,
        phi_rate=diagnostics.phi_rate,
        multipliers=diagnostics.multipliers,
        constraint_force=diagnostics.force,
    )
    logger.info(
        "Holonomic run finished: %d samples, max|phi| = %.3g",
        len(trajectory),
        float(np.max(np.abs(trajectory.phi))) if trajectory.phi.size else 0.0,
    )
    return trajectory


def constraint_force_along(sys, cs, traj, method="multipliers"):
    """Per-sample R as an (m, n) array.

    ``multipliers`` uses Σ λ_α sharp(dφ_α) (stored diagnostics when present);
    ``acceleration`` recovers R = ∇_γ̇γ̇ − F from differenced velocities.
    """
    match method:
        case "multipliers":
            if cs.h == 0:
                return np.zeros_like(traj.q)
            if traj.constraint_force is not None and traj.constraint_kind == "holonomic":
                return np.array(traj.constraint_force)
            forces = np.empty_like(traj.q)
            for i, s in enumerate(traj.states()):
                lam, sharps, _, _, _ = _multipliers(sys, cs, s, (0.0, 0.0))
                forces[i] = sharps @ lam
            return forces
        case "acceleration":
            dynamics.require_samples(traj)
            accelerations = np.gradient(traj.v, traj.times, axis=0, edge_order=2)
            forces = np.empty_like(traj.q)
            for i, s in enumerate(traj.states()):
                factor, christoffel = connection_at(sys, s.q)
                forces[i] = (
                    accelerations[i]
                    + christoffel.contract(s.v, s.v)
                    - effective_force(sys, s, factor, traj.control_values(i))
                )
            return forces
    raise ValueError(f"unknown constraint force method '{method}'")


def holonomic_dalembert_check(sys, cs, q, R):
    """max |g(R, w)| over a g-orthonormal basis w of T_qS."""
    q = np.asarray(q, dtype=float)
    basis = tangent_basis(sys, cs, q)
    if basis.shape[1] == 0:
        return 0.0
    factor = factor_metric(sys, q)
    return float(np.max(np.abs(basis.T @ factor.lower(np.asarray(R, dtype=float)))))

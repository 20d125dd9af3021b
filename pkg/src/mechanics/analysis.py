"""Hamilton-Jacobi fields, the Jacobi metric, Noether quantities and the Schrödinger check."""

from dataclasses import dataclass, field
import itertools
import logging

import numpy as np
from scipy.integrate import simpson

from mechanics import dynamics
from mechanics.dynamics import PhaseState, effective_force, phase_rhs
from mechanics.expression import Expression, Number, mul, sub
from mechanics.geometry import (
    connection_at,
    covariant_derivative_values,
    divergence,
    factor_metric,
    field_jet,
    killing_residual,
    laplace_beltrami,
    metric_jet,
    resolve_field,
)
from mechanics.system import TangentVector
from utils.errors import (
    ConfigError,
    EnergyMismatchError,
    JacobiFactorError,
    SystemDefinitionError,
)
from utils.integrators import IntegrationOutcome, rk4_step, solve

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 11
EQUIVALENCE_CLOSED_TOLERANCE = 1e-10
EQUIVALENCE_TOLERANCE = 1e-6
JACOBI_ENERGY_TOLERANCE = 1e-9
JACOBI_MIN_STEP = 1e-12
TRACE_CHUNK = 256


# ---------------------------------------------------------------------------
# Sample grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridAxis:
    coord: str
    lo: float
    hi: float
    count: int

    def values(self):
        if self.count == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.count)

    def __str__(self):
        return f"{self.coord}:{self.lo!r}:{self.hi!r}:{self.count}"


@dataclass(frozen=True)
class SampleGrid:
    """Box of sample points; coordinates without an axis stay at their fixed value."""

    axes: tuple
    fixed: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, specs, coords, default_count=DEFAULT_GRID_POINTS, fixed=None):
        """Build a grid from ``coord:lo:hi[:count]`` texts."""
        axes = []
        for spec in specs:
            parts = spec.split(":")
            if len(parts) not in (3, 4):
                raise ConfigError(f"grid axis '{spec}' must look like coord:lo:hi[:count]")
            name = parts[0].strip()
            if name not in coords:
                raise ConfigError(f"grid axis '{spec}' names unknown coordinate '{name}'")
            if any(a.coord == name for a in axes):
                raise ConfigError(f"coordinate '{name}' appears twice in the grid")
            try:
                lo, hi = float(parts[1]), float(parts[2])
                count = int(parts[3]) if len(parts) == 4 else default_count
            except ValueError:
                raise ConfigError(f"grid axis '{spec}' has a non-numeric bound or count") from None
            if count < 1 or hi < lo:
                raise ConfigError(f"grid axis '{spec}' is empty")
            axes.append(GridAxis(name, lo, hi, count))
        if not axes:
            raise ConfigError("grid is empty")
        return cls(tuple(axes), dict(fixed or {}))

    def points(self, coords):
        index = {c: i for i, c in enumerate(coords)}
        base = np.array([float(self.fixed.get(c, 0.0)) for c in coords])
        out = []
        for combo in itertools.product(*(axis.values() for axis in self.axes)):
            q = base.copy()
            for axis, value in zip(self.axes, combo):
                q[index[axis.coord]] = value
            out.append(q)
        return np.array(out)

    def describe(self):
        return {"axes": [str(a) for a in self.axes], "fixed": dict(self.fixed)}


def _grid_points(sys, grid):
    points = grid.points(sys.coords) if isinstance(grid, SampleGrid) else np.asarray(grid, float)
    points = np.atleast_2d(points)
    if points.size == 0:
        raise ConfigError("grid is empty")
    return points


def _max(values):
    return float(np.max(values)) if values is not None and len(values) else 0.0


# ---------------------------------------------------------------------------
# Hamilton-Jacobi fields
# ---------------------------------------------------------------------------


def _field_state(sys, X, q):
    x, jx, _ = field_jet(sys, X, q)
    return x, jx, PhaseState(0.0, np.asarray(q, dtype=float), x)


def hj_residual(sys, X, q):
    """∇_X X − F, with F evaluated on the phase point (q, X(q))."""
    x, jx, s = _field_state(sys, X, q)
    factor, christoffel = connection_at(sys, s.q)
    residual = covariant_derivative_values(x, x, jx, christoffel) - effective_force(sys, s, factor)
    return TangentVector(s.q, residual)


def closedness_residual(sys, X, q):
    """M_ij = ∂_i (flat X)_j − ∂_j (flat X)_i."""
    x, jx, _ = field_jet(sys, X, q)
    G, dG, _ = metric_jet(sys, q, order=1)
    dflat = np.einsum("ijk,k->ij", dG, x) + (G @ jx).T
    return dflat - dflat.T


def work_form_closedness(sys, q, v=None, t=0.0):
    """dω for ω = flat(F), F the applied force at (q, v); zero when F is locally conservative."""
    q = np.asarray(q, dtype=float)
    v = np.zeros(sys.n) if v is None else np.asarray(v, dtype=float)
    n = sys.n
    bindings = sys.bindings(q, v, t)
    d_omega = np.zeros((n, n))
    if sys.work_form is not None:
        for j, comp in enumerate(sys.work_form):
            if not comp.is_constant:
                d_omega[:, j] += comp.jet(bindings, sys.coords, order=1).grad
    if sys.force is not None:
        G, dG, _ = metric_jet(sys, q, order=1)
        values = np.array([c.evaluate(bindings) for c in sys.force])
        jac = np.array(
            [
                np.zeros(n) if c.is_constant else c.jet(bindings, sys.coords, order=1).grad
                for c in sys.force
            ]
        )
        d_omega += np.einsum("ijk,k->ij", dG, values) + (G @ jac).T
    return d_omega - d_omega.T


def killing_form_identity(sys, X, Y, q):
    """(g(∇_Y X, Y), ½(𝓛_X g)(Y, Y)); the two agree for any X and Y."""
    q = np.asarray(q, dtype=float)
    x, jx, _ = field_jet(sys, X, q)
    y, _, _ = field_jet(sys, Y, q)
    factor, christoffel = connection_at(sys, q)
    nabla_y_x = covariant_derivative_values(y, x, jx, christoffel)
    lie = killing_residual(sys, X, q)
    return factor.inner(nabla_y_x, y), 0.5 * float(y @ lie @ y)


@dataclass
class HJReport:
    check: str
    points: np.ndarray
    residual: np.ndarray
    closedness: np.ndarray | None = None
    energy: np.ndarray | None = None
    divergence: np.ndarray | None = None
    grid: SampleGrid | None = None

    @property
    def energy_deviation(self):
        if self.energy is None:
            return None
        return np.abs(self.energy - np.mean(self.energy))

    @property
    def max_residuals(self):
        out = {"hj": _max(self.residual)}
        if self.closedness is not None:
            out["closedness"] = _max(self.closedness)
        if self.energy is not None:
            out["energy_deviation"] = _max(self.energy_deviation)
        if self.divergence is not None:
            out["divergence"] = _max(np.abs(self.divergence))
        return out

    @property
    def equivalence_consistent(self):
        """Whether ∇_X X = F and E∘X = const hold or fail together (None unless X is closed)."""
        if self.energy is None or self.closedness is None:
            return None
        if _max(self.closedness) > EQUIVALENCE_CLOSED_TOLERANCE:
            return None
        energy_tol = EQUIVALENCE_TOLERANCE * (1.0 + float(np.max(np.abs(self.energy))))
        hj_ok = _max(self.residual) <= EQUIVALENCE_TOLERANCE
        energy_ok = _max(self.energy_deviation) <= energy_tol
        return hj_ok == energy_ok

    def to_dict(self, per_point=False):
        report = {
            "check": self.check,
            "grid": self.grid.describe() if self.grid else {"points": len(self.points)},
            "max_residuals": self.max_residuals,
        }
        if self.energy is not None:
            report["energy_mean"] = float(np.mean(self.energy))
            report["equivalence_consistent"] = self.equivalence_consistent
        if per_point:
            rows = []
            for i, q in enumerate(self.points):
                row = {"q": q.tolist(), "hj": float(self.residual[i])}
                if self.closedness is not None:
                    row["closedness"] = float(self.closedness[i])
                if self.energy is not None:
                    row["energy"] = float(self.energy[i])
                if self.divergence is not None:
                    row["divergence"] = float(self.divergence[i])
                rows.append(row)
            report["per_point"] = rows
        return report


def _hj_norm(sys, X, q):
    r = hj_residual(sys, X, q).components
    return float(np.sqrt(max(factor_metric(sys, q).inner(r, r), 0.0)))


def hj_energy_check(sys, X, grid):
    """E∘X on the grid next to the HJ and closedness residuals (V = 0 without a potential)."""
    points = _grid_points(sys, grid)
    resolve_field(sys, X)
    residual, closed, energy = [], [], []
    for q in points:
        _, _, s = _field_state(sys, X, q)
        residual.append(_hj_norm(sys, X, q))
        closed.append(float(np.max(np.abs(closedness_residual(sys, X, q)))))
        energy.append(dynamics.total_energy(sys, s))
    report = HJReport(
        "hj",
        points,
        np.array(residual),
        np.array(closed),
        np.array(energy),
        grid=grid if isinstance(grid, SampleGrid) else None,
    )
    logger.info("HJ check over %d points: %s", len(points), report.max_residuals)
    return report


def stationary_euler_example(sys, X, grid):
    """Stationary Euler flow: ∇_X X = −grad p (p is the system potential) and div X = 0."""
    if sys.potential is None:
        raise SystemDefinitionError("the pressure must be declared as the potential")
    points = _grid_points(sys, grid)
    residual = np.array([_hj_norm(sys, X, q) for q in points])
    div = np.array([divergence(sys, X, q) for q in points])
    return HJReport(
        "euler-fluid",
        points,
        residual,
        divergence=div,
        grid=grid if isinstance(grid, SampleGrid) else None,
    )


def integral_curve(sys, X, q0, cfg):
    """Integral curve of X from q0; samples carry v = X(q)."""
    n = sys.n
    comps = resolve_field(sys, X)

    def values(q, t):
        bindings = sys.bindings(q, t=t)
        return np.array([c.evaluate(bindings) for c in comps])

    outcome = solve(lambda t, q: values(q, t), np.asarray(q0, dtype=float), cfg)
    states = [np.concatenate([q, values(q, t)]) for t, q in zip(outcome.times, outcome.states)]
    lifted = IntegrationOutcome(outcome.times, states, outcome.error, outcome.step)
    logger.info("Integral curve with %d samples in dimension %d", len(states), n)
    return dynamics.build_trajectory(sys, lifted, cfg)


# ---------------------------------------------------------------------------
# Jacobi metric
# ---------------------------------------------------------------------------


def jacobi_metric(sys, E0):
    """System with metric (E0 − V) g, no potential and no forces."""
    if sys.potential is not None and "t" in sys.potential.free_symbols:
        raise SystemDefinitionError("the Jacobi metric needs a time-independent potential")
    V = sys.potential.root if sys.potential is not None else Number(0.0)
    factor = sub(Number(float(E0)), V)
    symbols = sys.symbols
    n = sys.n
    grid = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            entry = sys.metric[i][j]
            if entry is not None:
                grid[i][j] = grid[j][i] = Expression(mul(factor, entry.root), symbols)
    return sys.replace(
        name=f"{sys.name}_jacobi",
        metric=tuple(tuple(row) for row in grid),
        potential=None,
        force=None,
        work_form=None,
        holonomic={},
        nonholonomic=(),
        conformal_factor=Expression(factor, symbols),
    )


@dataclass(frozen=True)
class TraceDistance:
    forward: float
    backward: float

    @property
    def value(self):
        return max(self.forward, self.backward)

    def to_dict(self):
        return {"forward": self.forward, "backward": self.backward, "max": self.value}


def _one_sided(points, curve):
    """sup over points of the distance to the polyline through curve."""
    if len(curve) == 1:
        return float(np.max(np.linalg.norm(points - curve[0], axis=1)))
    starts = curve[:-1]
    seg = curve[1:] - starts
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    safe = np.where(seg_len2 > 0.0, seg_len2, 1.0)
    worst = 0.0
    for lo in range(0, len(points), TRACE_CHUNK):
        chunk = points[lo : lo + TRACE_CHUNK]
        rel = chunk[:, None, :] - starts[None, :, :]
        u = np.clip(np.einsum("psk,sk->ps", rel, seg) / safe, 0.0, 1.0)
        u = np.where(seg_len2 > 0.0, u, 0.0)
        diff = rel - u[:, :, None] * seg[None, :, :]
        dist = np.sqrt(np.min(np.einsum("psk,psk->ps", diff, diff), axis=1))
        worst = max(worst, float(np.max(dist)))
    return worst


def trace_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    return TraceDistance(_one_sided(a, b), _one_sided(b, a))


def _jacobi_geodesic(jac, q0, u0, length, ds, min_step):
    """RK4 in g0-arc length.

    Steps leaving the region E0 > V are halved down to min_step, then the direction reverses.
    """
    n = jac.n
    rhs = phase_rhs(jac, lambda s: dynamics.acceleration(jac, s))
    y = np.concatenate([q0, u0])
    s, h = 0.0, ds
    points = [np.array(q0)]
    reflected = False
    while s < length - 1e-15 * max(1.0, length):
        step = min(h, length - s)
        try:
            y_next = rk4_step(rhs, s, y, step)
            if not np.all(np.isfinite(y_next)):
                raise JacobiFactorError(f"geodesic left the region E0 > V at s={s:.6g}")
            factor_metric(jac, y_next[:n])
        except JacobiFactorError:
            if step > min_step:
                h = step / 2.0
                continue
            if reflected:
                raise
            reflected = True
            y = np.concatenate([y[:n], -y[n:]])
            h = ds
            logger.debug("Geodesic reflected at the boundary E0 = V, s=%g", s)
            continue
        y, s = y_next, s + step
        reflected = False
        points.append(y[:n].copy())
        h = min(ds, 2.0 * h)
    return np.array(points)


def jacobi_compare(
    sys, E0, s0, cfg, energy_tolerance=JACOBI_ENERGY_TOLERANCE, min_step=JACOBI_MIN_STEP
):
    """Trace distance between the Newton trajectory at energy E0 and the matching g0-geodesic."""
    energy = dynamics.total_energy(sys, s0)
    if abs(energy - E0) > energy_tolerance:
        raise EnergyMismatchError(
            f"initial energy {float(energy)!r} differs from E0={E0!r} "
            f"by more than {energy_tolerance:g}"
        )
    newton = dynamics.integrate(sys, s0, cfg).raise_for_error()
    jac = jacobi_metric(sys, E0)
    if not np.any(s0.v):
        raise SystemDefinitionError("zero initial velocity leaves the geodesic direction undefined")
    # g0(v, v) = (E0 − V) g(v, v) = (E0 − V) 2K
    potential = newton.energy - newton.kinetic if newton.has_potential else np.zeros(len(newton))
    g0_speed = np.sqrt(np.clip((E0 - potential) * 2.0 * newton.kinetic, 0.0, None))
    length = float(simpson(g0_speed, x=newton.times))
    u0 = s0.v / np.sqrt(factor_metric(jac, s0.q).inner(s0.v, s0.v))
    ds = length / max(len(newton) - 1, 1)
    logger.info("Jacobi geodesic over g0-length %.6g with step %.3g", length, ds)
    geodesic = _jacobi_geodesic(jac, np.asarray(s0.q, dtype=float), u0, length, ds, min_step)
    distance = trace_distance(newton.q, geodesic)
    logger.info("Jacobi trace distance %.3g", distance.value)
    return distance


# ---------------------------------------------------------------------------
# Noether quantities
# ---------------------------------------------------------------------------


@dataclass
class NoetherReport:
    field: str
    times: np.ndarray
    values: np.ndarray
    killing: float
    force_pairing: float

    @property
    def drift(self):
        return float(np.max(np.abs(self.values - self.values[0]))) if len(self.values) else 0.0

    @property
    def relative_drift(self):
        initial = abs(float(self.values[0])) if len(self.values) else 0.0
        return self.drift / initial if initial else self.drift

    def to_dict(self):
        return {
            "check": "noether",
            "field": self.field,
            "samples": len(self.values),
            "initial": float(self.values[0]) if len(self.values) else None,
            "max_residuals": {
                "drift": self.drift,
                "relative_drift": self.relative_drift,
                "killing": self.killing,
                "g(X,F)": self.force_pairing,
            },
        }


def noether_quantity(sys, X, traj):
    """I_X = g(X, v) per sample, with the Killing and g(X, F) hypotheses measured alongside."""
    values = np.empty(len(traj))
    killing = 0.0
    pairing = 0.0
    for i, s in enumerate(traj.states()):
        x, _, _ = field_jet(sys, X, s.q)
        factor = factor_metric(sys, s.q)
        values[i] = factor.inner(x, s.v)
        killing = max(killing, float(np.max(np.abs(killing_residual(sys, X, s.q)))))
        force = effective_force(sys, s, factor, traj.control_values(i))
        pairing = max(pairing, abs(factor.inner(x, force)))
    name = X if isinstance(X, str) else "X"
    return NoetherReport(name, np.array(traj.times), values, killing, pairing)


# ---------------------------------------------------------------------------
# Schrödinger triple
# ---------------------------------------------------------------------------


@dataclass
class SchrodingerReport:
    points: np.ndarray
    energy: np.ndarray
    laplacian: np.ndarray
    real_part: np.ndarray
    imaginary_part: np.ndarray
    sign: int = -1

    @property
    def max_residuals(self):
        return {
            "hj_energy": _max(self.energy),
            "laplacian": _max(self.laplacian),
            "schrodinger": _max(np.hypot(self.real_part, self.imaginary_part)),
            "schrodinger_re": _max(self.real_part),
            "schrodinger_im": _max(self.imaginary_part),
        }

    def failed(self, tol):
        names = ("hj_energy", "laplacian", "schrodinger")
        return [name for name in names if self.max_residuals[name] > tol]

    def to_dict(self, per_point=False):
        report = {
            "check": "schrodinger",
            "grid": {"points": len(self.points)},
            "sign": self.sign,
            "max_residuals": self.max_residuals,
        }
        if per_point:
            report["per_point"] = [
                {
                    "q": q.tolist(),
                    "hj_energy": float(self.energy[i]),
                    "laplacian": float(self.laplacian[i]),
                    "schrodinger_re": float(self.real_part[i]),
                    "schrodinger_im": float(self.imaginary_part[i]),
                }
                for i, q in enumerate(self.points)
            ]
        return report


def schrodinger_triple_check(sys, S, E0, points, sign=-1):
    """Residuals of E∘(sign·grad S) = E0, ΔS = 0 and (−½Δ + V)Ψ = E0Ψ for Ψ = exp(iS).

    Condition three is split as Re = ½g(grad S, grad S) + V − E0 and Im = −½ΔS.
    """
    if sign not in (-1, 1):
        raise ConfigError("the Schrödinger sign must be +1 or -1")
    scalar = sys.scalar_field(S) if isinstance(S, str) else S
    points = _grid_points(sys, points)
    energy, lap, re, im = [], [], [], []
    for q in points:
        s = PhaseState(0.0, q, np.zeros(sys.n))
        factor = factor_metric(sys, q)
        dS = np.zeros(sys.n)
        if not scalar.is_constant:
            dS = scalar.jet(sys.bindings(q), sys.coords, order=1).grad
        x = sign * factor.raise_index(dS)
        kinetic = 0.5 * factor.inner(x, x)
        V = dynamics.potential_energy(sys, s)
        delta = laplace_beltrami(sys, scalar, q)
        energy.append(abs(kinetic + V - E0))
        lap.append(abs(delta))
        re.append(abs(kinetic + V - E0))
        im.append(abs(-0.5 * delta))
    return SchrodingerReport(
        points, np.array(energy), np.array(lap), np.array(re), np.array(im), sign
    )

"""Control-affine mechanical systems ∇_γ̇γ̇ = F + Σ u_i F^i."""

from dataclasses import dataclass
import logging

import numpy as np

from mechanics import dynamics
from mechanics.dynamics import acceleration, phase_rhs
from mechanics.expression import (
    ZERO,
    MetricInverse,
    Number,
    add,
    differentiate,
    eval_node,
    free_symbols,
    mul,
    neg,
    sub,
    total,
)
from mechanics.geometry import covariant_derivative_field, resolve_field
from mechanics.system import SystemDefinition, TangentVector
from utils.errors import BudgetExceededError, SignalError, SystemDefinitionError
from utils.integrators import IntegrationOutcome, solve

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
MAX_GENERATORS = 256


@dataclass(frozen=True)
class PiecewiseConstantSignal:
    """Per-channel values held from each breakpoint until the next; the last row holds onward."""

    breakpoints: np.ndarray
    values: np.ndarray
    channels: tuple = ()

    def __post_init__(self):
        breakpoints = np.asarray(self.breakpoints, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if breakpoints.ndim != 1 or len(breakpoints) == 0:
            raise SignalError("signal needs at least one breakpoint")
        if values.shape[0] != len(breakpoints):
            raise SignalError("signal needs one row of values per breakpoint")
        if np.any(np.diff(breakpoints) <= 0.0):
            raise SignalError("signal breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", breakpoints)
        object.__setattr__(self, "values", values)
        if not self.channels:
            names = tuple(f"u{i + 1}" for i in range(values.shape[1]))
            object.__setattr__(self, "channels", names)
        elif len(self.channels) != values.shape[1]:
            raise SignalError(f"signal has {values.shape[1]} channels, {len(self.channels)} names")

    @classmethod
    def constant(cls, values, t0=0.0, channels=()):
        return cls(np.array([t0]), np.atleast_2d(np.asarray(values, dtype=float)), tuple(channels))

    @property
    def k(self):
        return self.values.shape[1]

    def at(self, t):
        t = float(t)
        index = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        if index < 0:
            first = float(self.breakpoints[0])
            raise SignalError(f"signal is undefined at t={t!r} (first breakpoint {first!r})")
        row = self.values[index]
        if np.any(np.isnan(row)):
            raise SignalError(f"signal has a gap at t={t!r}")
        return row

    def segments(self, t0, t1):
        """(start, end, values) pieces covering [t0, t1], split at breakpoints."""
        self.at(t0)
        cuts = [t0] + [b for b in self.breakpoints if t0 < b < t1] + [t1]
        return [(a, b, self.at(a)) for a, b in zip(cuts[:-1], cuts[1:])]

    def check_bounds(self, lower, upper):
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.k,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.k,))
        finite = self.values[~np.any(np.isnan(self.values), axis=1)]
        if np.any(finite < lower) or np.any(finite > upper):
            raise SignalError("signal leaves the admissible input box")


@dataclass(frozen=True)
class ControlSystem:
    system: SystemDefinition
    inputs: tuple
    signal: PiecewiseConstantSignal | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        if not self.inputs:
            raise SystemDefinitionError("a control system needs at least one input field")
        for name in self.inputs:
            resolve_field(self.system, name)
        if self.signal is not None:
            if self.signal.k != len(self.inputs):
                raise SignalError(
                    f"signal has {self.signal.k} channels for {len(self.inputs)} input fields"
                )
            if self.bounds is not None:
                self.signal.check_bounds(*self.bounds)

    @classmethod
    def from_system(cls, sys, signal=None, bounds=None, inputs=None):
        """Inputs default to every declared control field, bounds to the declared box."""
        inputs = tuple(inputs or sys.controls)
        if bounds is None and sys.control_bounds:
            unbounded = (-np.inf, np.inf)
            box = [sys.control_bounds.get(name, unbounded) for name in inputs]
            bounds = ([lo for lo, _ in box], [hi for _, hi in box])
        return cls(sys, inputs, signal, bounds)


def _system(csys):
    return csys.system if isinstance(csys, ControlSystem) else csys


def integrate_control(csys, s0, cfg):
    """Newton equation with Σ u_i(t) F^i; the run restarts at every breakpoint."""
    if csys.signal is None:
        raise SignalError("no input signal given")
    sys = csys.system
    dynamics.check_interval(s0, cfg)
    segments = csys.signal.segments(s0.t, cfg.t1)
    logger.info("Control run over %d signal segments", len(segments))
    times, states, inputs = [], [], []
    error, step = None, None
    y = np.concatenate([s0.q, s0.v])
    for number, (start, end, values) in enumerate(segments):
        controls = dict(zip(csys.inputs, values))
        rhs = phase_rhs(sys, lambda s, c=controls: acceleration(sys, s, c))
        outcome = solve(rhs, y, cfg, t0=start, t1=end)
        step = step if step is not None else outcome.step
        last = number == len(segments) - 1
        keep = len(outcome.times) if (last or outcome.error) else len(outcome.times) - 1
        times.extend(outcome.times[:keep])
        states.extend(outcome.states[:keep])
        inputs.extend([values] * keep)
        if outcome.error:
            error = outcome.error
            break
        y = outcome.states[-1]
    merged = IntegrationOutcome(times, states, error, step)
    return dynamics.build_trajectory(
        sys,
        merged,
        cfg,
        control_names=tuple(csys.inputs),
        inputs=np.array(inputs).reshape(len(times), len(csys.inputs)),
    )


def symmetric_product(csys, Y, Z, q):
    """⟨⟨Y, Z⟩⟩ = ∇_Y Z + ∇_Z Y."""
    sys = _system(csys)
    q = np.asarray(q, dtype=float)
    yz = covariant_derivative_field(sys, Y, Z, q).components
    zy = covariant_derivative_field(sys, Z, Y, q).components
    return TangentVector(q, yz + zy)


# ---------------------------------------------------------------------------
# Symbolic products for the closure
# ---------------------------------------------------------------------------


def _is_zero(node):
    return isinstance(node, Number) and node.value == 0.0


def _metric_nodes(sys):
    return tuple(tuple(e.root if e is not None else ZERO for e in row) for row in sys.metric)


def _raise_symbolic(grid, k, covector):
    """Σ_l g^kl α_l with the inverse metric kept symbolic."""
    terms = [mul(MetricInverse(k, l, grid), a) for l, a in enumerate(covector) if not _is_zero(a)]
    return total(terms)


def symbolic_christoffel(sys):
    """Γ^k_ij as expression nodes, or None for a constant metric."""
    n = sys.n
    grid = _metric_nodes(sys)
    if all(not free_symbols(node) for row in grid for node in row):
        return None
    coords = sys.coords

    def bracket(l, i, j):
        # [ij, l] = ½(∂_i g_lj + ∂_j g_li − ∂_l g_ij)
        d = add(differentiate(grid[l][j], coords[i]), differentiate(grid[l][i], coords[j]))
        return mul(Number(0.5), sub(d, differentiate(grid[i][j], coords[l])))

    first = [[[bracket(l, i, j) for j in range(n)] for i in range(n)] for l in range(n)]
    return [
        [
            [_raise_symbolic(grid, k, [first[l][i][j] for l in range(n)]) for j in range(n)]
            for i in range(n)
        ]
        for k in range(n)
    ]


def _symbolic_product(coords, gamma, Y, Z):
    n = len(coords)
    out = []
    for k in range(n):
        terms = []
        for j, c in enumerate(coords):
            terms.append(mul(Y[j], differentiate(Z[k], c)))
            terms.append(mul(Z[j], differentiate(Y[k], c)))
        if gamma is not None:
            for i in range(n):
                for j in range(n):
                    if not _is_zero(gamma[k][i][j]):
                        terms.append(mul(Number(2.0), mul(gamma[k][i][j], mul(Y[i], Z[j]))))
        out.append(total(terms))
    return tuple(out)


def drift_field(sys):
    """The applied force as symbolic components in q (potential, force or work form)."""
    n = sys.n
    allowed = set(sys.coords)
    exprs = [*(sys.force or ()), *(sys.work_form or ())]
    if sys.potential is not None:
        exprs.append(sys.potential)
    if any(not expr.free_symbols <= allowed for expr in exprs):
        raise SystemDefinitionError("the drift must depend on the configuration only")
    covector = [ZERO] * n
    vector = [ZERO] * n
    if sys.potential is not None:
        covector = [neg(differentiate(sys.potential.root, c)) for c in sys.coords]
    if sys.work_form is not None:
        covector = [add(a, w.root) for a, w in zip(covector, sys.work_form)]
    if sys.force is not None:
        vector = [f.root for f in sys.force]
    grid = _metric_nodes(sys)
    return tuple(add(vector[k], _raise_symbolic(grid, k, covector)) for k in range(n))


@dataclass
class ClosureResult:
    rank: int
    depth: int
    basis: np.ndarray
    labels: list
    values: np.ndarray

    @property
    def generator_count(self):
        return len(self.labels)

    def to_dict(self):
        return {
            "check": "symmetric-rank",
            "rank": self.rank,
            "depth": self.depth,
            "generators": self.generator_count,
            "labels": list(self.labels),
            "basis": self.basis.tolist(),
        }


def _rank(values, tol):
    if values.size == 0:
        return 0, np.zeros((0, values.shape[1] if values.ndim == 2 else 0))
    _, singular, vt = np.linalg.svd(values)
    if singular[0] == 0.0:
        return 0, np.zeros((0, values.shape[1]))
    rank = int(np.sum(singular > tol * singular[0]))
    return rank, vt[:rank]


def symmetric_closure_rank(
    csys,
    q,
    max_depth,
    include_drift=False,
    tol=RANK_TOLERANCE,
    max_generators=MAX_GENERATORS,
):
    """Rank at q of the span of the input fields and their iterated symmetric products.

    Depth 1 is the inputs themselves; each further depth adds ⟨⟨A, B⟩⟩ for every
    pair of current generators (and ⟨⟨F, A⟩⟩ for the drift F when included).
    """
    if max_depth < 1:
        raise SystemDefinitionError("max_depth must be at least 1")
    sys = _system(csys)
    inputs = csys.inputs if isinstance(csys, ControlSystem) else tuple(sys.controls)
    q = np.asarray(q, dtype=float)
    bindings = sys.bindings(q)
    gamma = symbolic_christoffel(sys)
    drift = drift_field(sys) if include_drift else None

    generators, labels, seen, rows = [], [], set(), []

    def admit(field, label):
        if all(_is_zero(c) for c in field) or field in seen:
            return
        if len(generators) >= max_generators:
            raise BudgetExceededError(
                f"symmetric closure exceeded {max_generators} generators at depth {depth}"
            )
        seen.add(field)
        generators.append(field)
        labels.append(label)
        rows.append([float(eval_node(c, bindings)) for c in field])

    depth = 1
    for name in inputs:
        admit(tuple(e.root for e in resolve_field(sys, name)), name)
    rank, basis = _rank(np.array(rows).reshape(-1, sys.n), tol)
    formed = set()
    while rank < sys.n and depth < max_depth:
        depth += 1
        current = list(zip(generators, labels))
        for a in range(len(current)):
            for b in range(a, len(current)):
                if (a, b) in formed:
                    continue
                formed.add((a, b))
                (ya, la), (yb, lb) = current[a], current[b]
                admit(_symbolic_product(sys.coords, gamma, ya, yb), f"<{la},{lb}>")
            if drift is not None and ("F", a) not in formed:
                formed.add(("F", a))
                ya, la = current[a]
                admit(_symbolic_product(sys.coords, gamma, drift, ya), f"<F,{la}>")
        rank, basis = _rank(np.array(rows).reshape(-1, sys.n), tol)
        logger.info(
            "Symmetric closure depth %d: %d generators, rank %d", depth, len(generators), rank
        )
    return ClosureResult(rank, depth, basis, labels, np.array(rows).reshape(-1, sys.n))

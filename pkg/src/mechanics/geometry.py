"""Chart-level Riemannian calculus for a SystemDefinition.

All derivatives come from forward-mode AD on the expression trees; nothing in
this module uses finite differences.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import linalg

from mechanics.expression import ZERO, Expression, add, velocity_name
from mechanics.system import (
    Covector,
    NonholonomicConstraint,
    SystemDefinition,
    TangentVector,
    as_components,
)
from utils.errors import JacobiFactorError, MetricError, RankDeficiencyError, SystemDefinitionError

logger = logging.getLogger(__name__)

# Above this dimension g^-1 is applied through the Cholesky factor instead of an explicit inverse.
EXPLICIT_INVERSE_MAX_DIM = 4
GRAM_SCHMIDT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ChristoffelEval:
    point: np.ndarray
    gamma: np.ndarray  # gamma[k, i, j] = Γ^k_ij

    def contract(self, u, w):
        """Γ^k_ij u^i w^j."""
        return np.einsum("kij,i,j->k", self.gamma, u, w)


@dataclass(frozen=True)
class MetricFactor:
    """Metric at a point with its Cholesky factor; applies g and g^-1."""

    point: np.ndarray
    matrix: np.ndarray
    cholesky: tuple

    @property
    def n(self):
        return self.matrix.shape[0]

    def inverse(self):
        if self.n <= EXPLICIT_INVERSE_MAX_DIM:
            return np.linalg.inv(self.matrix)
        return linalg.cho_solve(self.cholesky, np.eye(self.n))

    def lower(self, u):
        return self.matrix @ u

    def raise_index(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if self.n <= EXPLICIT_INVERSE_MAX_DIM:
            return self.inverse() @ alpha
        return linalg.cho_solve(self.cholesky, alpha)

    def inner(self, u, w):
        return float(u @ self.matrix @ w)


def _point(sys, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (sys.n,):
        raise SystemDefinitionError(f"expected {sys.n} coordinates, got shape {q.shape}")
    return q


def _check_conformal_factor(sys, q, t=0.0):
    if sys.conformal_factor is None:
        return
    factor = sys.conformal_factor.evaluate(sys.bindings(q, t=t))
    if not factor > 0.0:
        raise JacobiFactorError(
            f"conformal factor E0 - V = {factor:.6g} is not positive at q={q.tolist()}",
            point=q,
        )


def metric_jet(sys, q, order=1):
    """Metric values and coordinate partials.

    Returns (G, dG, d2G) with dG[k, i, j] = ∂_k g_ij and d2G[k, l, i, j] = ∂_k ∂_l g_ij;
    dG is None for order 0 and d2G is None below order 2.
    """
    q = _point(sys, q)
    n = sys.n
    bindings = sys.bindings(q)
    G = np.zeros((n, n))
    dG = np.zeros((n, n, n)) if order >= 1 else None
    d2G = np.zeros((n, n, n, n)) if order >= 2 else None
    for i in range(n):
        for j in range(i, n):
            entry = sys.metric[i][j]
            if entry is None:
                continue
            if order == 0 or entry.is_constant:
                value = entry.evaluate(bindings)
            else:
                jet = entry.jet(bindings, sys.coords, order=order)
                value = jet.value
                dG[:, i, j] = jet.grad
                dG[:, j, i] = jet.grad
                if order >= 2:
                    d2G[:, :, i, j] = jet.hess
                    d2G[:, :, j, i] = jet.hess
            G[i, j] = G[j, i] = value
    return G, dG, d2G


def factor_metric(sys, q, G=None):
    """Cholesky-factor the metric at q; failure means the metric is not Riemannian there."""
    q = _point(sys, q)
    _check_conformal_factor(sys, q)
    if G is None:
        G = metric_jet(sys, q, order=0)[0]
    if not np.all(np.isfinite(G)):
        raise MetricError(f"metric has non-finite entries at q={q.tolist()}", point=q)
    try:
        chol = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(G).min())
        raise MetricError(
            f"metric not positive definite at q={q.tolist()} ({exc}); "
            f"smallest eigenvalue {smallest:.6g}",
            point=q,
            min_eigenvalue=smallest,
        ) from None
    return MetricFactor(q, G, chol)


def metric_at(sys, q):
    return factor_metric(sys, q).matrix


def inverse_metric_at(sys, q):
    return factor_metric(sys, q).inverse()


def _christoffel_from(q, dG, factor):
    if not np.any(dG):
        return ChristoffelEval(q, np.zeros_like(dG))
    # first[l, i, j] = [ij, l] = ½(∂_i g_lj + ∂_j g_li − ∂_l g_ij)
    first = 0.5 * (np.transpose(dG, (1, 0, 2)) + np.transpose(dG, (1, 2, 0)) - dG)
    gamma = np.einsum("kl,lij->kij", factor.inverse(), first)
    gamma = 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))
    return ChristoffelEval(q, gamma)


def connection_at(sys, q):
    """Metric factor and Christoffel symbols from a single metric jet."""
    q = _point(sys, q)
    G, dG, _ = metric_jet(sys, q, order=1)
    factor = factor_metric(sys, q, G)
    return factor, _christoffel_from(q, dG, factor)


def christoffel_at(sys, q, factor=None):
    if factor is None:
        return connection_at(sys, q)[1]
    q = _point(sys, q)
    _, dG, _ = metric_jet(sys, q, order=1)
    return _christoffel_from(q, dG, factor)


def flat(sys, v):
    factor = factor_metric(sys, v.point)
    return Covector(v.point, factor.lower(as_components(v)))


def sharp(sys, alpha):
    factor = factor_metric(sys, alpha.point)
    return TangentVector(alpha.point, factor.raise_index(as_components(alpha)))


def g_inner(sys, q, u, w):
    return factor_metric(sys, q).inner(as_components(u), as_components(w))


def _scalar(sys, f):
    if isinstance(f, str):
        return sys.scalar_field(f)
    return f


def differential(sys, f, q, v=None, t=0.0):
    """Components ∂f/∂q^i of a scalar expression."""
    f = _scalar(sys, f)
    q = _point(sys, q)
    if f.is_constant:
        return np.zeros(sys.n)
    return f.jet(sys.bindings(q, v, t), sys.coords, order=1).grad


def gradient(sys, f, q, v=None, t=0.0):
    q = _point(sys, q)
    df = differential(sys, f, q, v, t)
    return TangentVector(q, factor_metric(sys, q).raise_index(df))


def resolve_field(sys, Y):
    if isinstance(Y, str):
        return sys.vector_field(Y)
    return tuple(Y)


def field_jet(sys, Y, q, order=1, t=0.0):
    """Values Y^k and Jacobian J[k, j] = ∂_j Y^k (plus H[k, i, j] for order 2)."""
    comps = resolve_field(sys, Y)
    q = _point(sys, q)
    n = sys.n
    bindings = sys.bindings(q, t=t)
    values = np.zeros(n)
    J = np.zeros((n, n))
    H = np.zeros((n, n, n)) if order >= 2 else None
    for k, comp in enumerate(comps):
        if comp.is_constant:
            values[k] = comp.evaluate(bindings)
            continue
        jet = comp.jet(bindings, sys.coords, order=order)
        values[k] = jet.value
        J[k] = jet.grad
        if H is not None:
            H[k] = jet.hess
    return values, J, H


def covariant_derivative_values(y, z, jz, christoffel):
    """(∇_Y Z)^k = Y^j ∂_j Z^k + Γ^k_ij Y^i Z^j from point data."""
    return jz @ y + christoffel.contract(y, z)


def covariant_derivative_field(sys, Y, Z, q):
    q = _point(sys, q)
    y, _, _ = field_jet(sys, Y, q)
    z, jz, _ = field_jet(sys, Z, q)
    christoffel = christoffel_at(sys, q)
    return TangentVector(q, covariant_derivative_values(y, z, jz, christoffel))


def lie_bracket(sys, Y, Z, q):
    """[Y, Z]^k = Y^j ∂_j Z^k − Z^j ∂_j Y^k."""
    q = _point(sys, q)
    y, jy, _ = field_jet(sys, Y, q)
    z, jz, _ = field_jet(sys, Z, q)
    return TangentVector(q, jz @ y - jy @ z)


def divergence(sys, X, q):
    """div X = ∂_i X^i + Γ^i_ik X^k."""
    q = _point(sys, q)
    x, jx, _ = field_jet(sys, X, q)
    gamma = christoffel_at(sys, q).gamma
    return float(np.trace(jx) + np.einsum("iik,k->", gamma, x))


def laplace_beltrami(sys, f, q):
    """Δf = g^ij (∂_i ∂_j f − Γ^k_ij ∂_k f)."""
    f = _scalar(sys, f)
    q = _point(sys, q)
    if f.is_constant:
        return 0.0
    jet = f.jet(sys.bindings(q), sys.coords, order=2)
    factor = factor_metric(sys, q)
    gamma = christoffel_at(sys, q, factor).gamma
    hessian = jet.hess - np.einsum("kij,k->ij", gamma, jet.grad)
    return float(np.sum(factor.inverse() * hessian))


def killing_residual(sys, X, q):
    """(𝓛_X g)_ij = X^k ∂_k g_ij + g_kj ∂_i X^k + g_ik ∂_j X^k."""
    q = _point(sys, q)
    x, jx, _ = field_jet(sys, X, q)
    G, dG, _ = metric_jet(sys, q, order=1)
    factor_metric(sys, q, G)
    A = jx.T @ G
    return np.einsum("k,kij->ij", x, dG) + (A + A.T)


@dataclass(frozen=True)
class OrthogonalSplit:
    """g-orthonormal bases of span{sharp α} and of its g-orthogonal complement."""

    point: np.ndarray
    normal_basis: np.ndarray  # columns
    tangent_basis: np.ndarray  # columns
    metric: np.ndarray

    @property
    def normal_projector(self):
        E = self.normal_basis
        return E @ E.T @ self.metric

    @property
    def tangent_projector(self):
        return np.eye(self.metric.shape[0]) - self.normal_projector


def _gram_schmidt_step(u, basis, factor):
    for _ in range(2):
        for e in basis:
            u = u - factor.inner(u, e) * e
    return u


def orthonormal_split(sys, q, covectors, tol=GRAM_SCHMIDT_TOLERANCE):
    """g-Gram–Schmidt on {sharp α_r}; a g-norm below tol means the covectors are dependent."""
    q = _point(sys, q)
    factor = factor_metric(sys, q)
    n = sys.n
    normals = []
    for alpha in np.atleast_2d(np.asarray(covectors, dtype=float)).reshape(-1, n):
        u = _gram_schmidt_step(factor.raise_index(alpha), normals, factor)
        norm = np.sqrt(max(factor.inner(u, u), 0.0))
        if norm < tol:
            raise RankDeficiencyError(
                f"constraint differentials are linearly dependent at q={q.tolist()} "
                f"(g-norm {norm:.3g} after Gram-Schmidt)"
            )
        normals.append(u / norm)
    tangents = []
    candidates = list(np.eye(n))
    while len(tangents) < n - len(normals) and candidates:
        projected = [_gram_schmidt_step(c, normals + tangents, factor) for c in candidates]
        norms = [np.sqrt(max(factor.inner(u, u), 0.0)) for u in projected]
        best = int(np.argmax(norms))
        if norms[best] < tol:
            break
        tangents.append(projected[best] / norms[best])
        candidates.pop(best)
    if len(tangents) != n - len(normals):
        raise RankDeficiencyError(f"could not complete a tangent basis at q={q.tolist()}")
    normal_basis = np.array(normals).T if normals else np.zeros((n, 0))
    tangent_basis = np.array(tangents).T if tangents else np.zeros((n, 0))
    return OrthogonalSplit(q, normal_basis, tangent_basis, factor.matrix)


# ---------------------------------------------------------------------------
# Product systems
# ---------------------------------------------------------------------------


def _rename_map(system, prefix):
    mapping = {c: f"{prefix}{c}" for c in system.coords}
    mapping.update({velocity_name(c): velocity_name(f"{prefix}{c}") for c in system.coords})
    return mapping


def _unique(name, taken, prefix):
    return f"{prefix}{name}" if name in taken else name


def product_system(systems, interaction=None):
    """Block-diagonal product g = ⊕ g_μ of several systems.

    Coordinates that clash are prefixed with their system's name. ``interaction``
    optionally gives one extra force component per joint coordinate (text or
    Expression over the joint symbols), modelling forces that couple the blocks.
    """
    from parsers.expression_parser import parse_expression

    if not systems:
        raise SystemDefinitionError("product needs at least one system")
    seen = {}
    for index, system in enumerate(systems):
        for c in system.coords:
            seen.setdefault(c, []).append(index)
    prefixes, mappings, coords = [], [], []
    for index, system in enumerate(systems):
        clash = any(len(seen[c]) > 1 for c in system.coords)
        prefix = f"{system.name or 'sys'}{index + 1}_" if clash else ""
        prefixes.append(prefix)
        mappings.append(_rename_map(system, prefix) if prefix else {})
        coords.extend(f"{prefix}{c}" for c in system.coords)
    coords = tuple(coords)
    n = len(coords)
    symbols = coords + tuple(velocity_name(c) for c in coords) + ("t",)

    def carry(expr, mapping):
        if expr is None:
            return None
        return Expression(expr.renamed(mapping).root, symbols)

    metric = [[None] * n for _ in range(n)]
    potential_root = ZERO
    has_potential = False
    force, work_form = [], []
    holonomic, nonholonomic, fields, scalars, controls = {}, [], {}, {}, {}
    offset = 0
    zero = Expression(ZERO, symbols)
    for system, mapping, prefix in zip(systems, mappings, prefixes):
        m = system.n
        for i in range(m):
            for j in range(i, m):
                entry = carry(system.metric[i][j], mapping)
                metric[offset + i][offset + j] = entry
                metric[offset + j][offset + i] = entry
        if system.potential is not None:
            has_potential = True
            potential_root = add(potential_root, carry(system.potential, mapping).root)
        force.append([carry(e, mapping) for e in system.force] if system.force else None)
        work_form.append(
            [carry(e, mapping) for e in system.work_form] if system.work_form else None
        )
        for name, expr in system.holonomic.items():
            holonomic[_unique(name, holonomic, prefix or f"{system.name}_")] = carry(expr, mapping)
        taken = {c.name for c in nonholonomic}
        for constraint in system.nonholonomic:
            nonholonomic.append(
                NonholonomicConstraint(
                    _unique(constraint.name, taken, prefix or f"{system.name}_"),
                    carry(constraint.expr, mapping),
                    constraint.kind,
                )
            )
        for group, target in ((system.fields, fields), (system.controls, controls)):
            for name, comps in group.items():
                padded = [zero] * n
                padded[offset : offset + m] = [carry(e, mapping) for e in comps]
                target[_unique(name, target, prefix or f"{system.name}_")] = tuple(padded)
        for name, expr in system.scalars.items():
            scalars[_unique(name, scalars, prefix or f"{system.name}_")] = carry(expr, mapping)
        offset += m

    if any(f is not None for f in force) and any(w is not None for w in work_form):
        raise SystemDefinitionError("cannot combine force and work_form blocks in a product")

    def concatenate(blocks):
        if all(b is None for b in blocks):
            return None
        out = []
        for block, system in zip(blocks, systems):
            out.extend(block if block is not None else [zero] * system.n)
        return out

    force_comps = concatenate(force)
    work_comps = concatenate(work_form)
    if interaction is not None:
        if work_comps is not None:
            raise SystemDefinitionError("interaction forces require force blocks, not work forms")
        if len(interaction) != n:
            raise SystemDefinitionError(f"interaction needs {n} components")
        extra = [parse_expression(e, symbols) if isinstance(e, str) else e for e in interaction]
        base = force_comps or [zero] * n
        force_comps = [Expression(add(a.root, b.root), symbols) for a, b in zip(base, extra)]
    logger.info("Built product of %d systems with %d coordinates", len(systems), n)
    return SystemDefinition(
        name=" x ".join(s.name for s in systems),
        coords=coords,
        metric=tuple(tuple(row) for row in metric),
        potential=Expression(potential_root, symbols) if has_potential else None,
        force=tuple(force_comps) if force_comps else None,
        work_form=tuple(work_comps) if work_comps else None,
        holonomic=holonomic,
        nonholonomic=tuple(nonholonomic),
        fields=fields,
        scalars=scalars,
        controls=controls,
    )

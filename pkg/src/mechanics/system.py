"""Declarative description of a mechanical system and the point-attached vector types."""

import dataclasses
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from mechanics.expression import TIME, velocity_name
from utils.errors import FieldNotFoundError, SystemDefinitionError

CONSTRAINT_KINDS = ("general", "linear", "affine")


@dataclass(frozen=True)
class NonholonomicConstraint:
    name: str
    expr: object
    kind: str = "general"


@dataclass(frozen=True)
class SystemDefinition:
    """Metric, forces, constraints and named fields on a single global chart.

    ``metric`` is the full n x n grid; entries are Expressions or None (zero) and
    the grid is mirrored so ``metric[i][j] is metric[j][i]``.
    """

    name: str
    coords: tuple
    metric: tuple
    potential: object = None
    force: tuple | None = None
    work_form: tuple | None = None
    holonomic: dict = field(default_factory=dict)
    nonholonomic: tuple = ()
    fields: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    controls: dict = field(default_factory=dict)
    control_bounds: dict = field(default_factory=dict)
    conformal_factor: object = None

    def __post_init__(self):
        n = len(self.coords)
        if n == 0:
            raise SystemDefinitionError("system needs at least one coordinate")
        if len(self.metric) != n or any(len(row) != n for row in self.metric):
            raise SystemDefinitionError(f"metric must be a {n}x{n} grid")
        for i in range(n):
            for j in range(i):
                if self.metric[i][j] is not self.metric[j][i]:
                    raise SystemDefinitionError(f"metric entries ({j + 1},{i + 1}) not mirrored")
        if self.force is not None and self.work_form is not None:
            raise SystemDefinitionError("force and work_form are mutually exclusive")
        for label, comps in (("force", self.force), ("work_form", self.work_form)):
            if comps is not None and len(comps) != n:
                raise SystemDefinitionError(f"{label} needs {n} components")
        for group in (self.fields, self.controls):
            for key, comps in group.items():
                if len(comps) != n:
                    raise SystemDefinitionError(f"field '{key}' needs {n} components")
        for key, (lo, hi) in self.control_bounds.items():
            if key not in self.controls:
                raise SystemDefinitionError(f"bounds given for unknown control '{key}'")
            if lo > hi:
                raise SystemDefinitionError(f"empty bounds for control '{key}'")

    @property
    def n(self):
        return len(self.coords)

    @property
    def velocities(self):
        return tuple(velocity_name(c) for c in self.coords)

    @property
    def symbols(self):
        return self.coords + self.velocities + (TIME,)

    def bindings(self, q, v=None, t=0.0):
        values = dict(zip(self.coords, (float(x) for x in q)))
        if v is not None:
            values.update(zip(self.velocities, (float(x) for x in v)))
        values[TIME] = float(t)
        return values

    def vector_field(self, name):
        """Components of a named vector field; control inputs are searched too."""
        if name in self.fields:
            return self.fields[name]
        if name in self.controls:
            return self.controls[name]
        raise FieldNotFoundError(name)

    def scalar_field(self, name):
        if name in self.scalars:
            return self.scalars[name]
        raise FieldNotFoundError(name, kind="scalar field")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PointVector:
    """Components attached to a base point; subclasses fix the variance."""

    point: np.ndarray
    components: np.ndarray
    covariant: ClassVar[bool] = False

    def __post_init__(self):
        if len(self.point) != len(self.components):
            raise SystemDefinitionError("component count must equal the system dimension")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


@dataclass(frozen=True)
class TangentVector(PointVector):
    covariant: ClassVar[bool] = False


@dataclass(frozen=True)
class Covector(PointVector):
    covariant: ClassVar[bool] = True


def as_components(vector):
    if isinstance(vector, PointVector):
        return np.asarray(vector.components, dtype=float)
    return np.asarray(vector, dtype=float)

"""Second-order dual numbers for forward-mode automatic differentiation.

A Dual2 carries a value, its gradient with respect to a fixed list of seed
directions and (optionally) the symmetric Hessian block. Arithmetic follows the
product and chain rules; every Hessian update is built from symmetric pieces so
the block stays exactly symmetric.
"""

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class Dual2:
    value: float
    grad: np.ndarray
    hess: np.ndarray | None = None

    @classmethod
    def constant(cls, value, size, order=2):
        hess = np.zeros((size, size)) if order >= 2 else None
        return cls(float(value), np.zeros(size), hess)

    @classmethod
    def variable(cls, value, index, size, order=2):
        grad = np.zeros(size)
        grad[index] = 1.0
        hess = np.zeros((size, size)) if order >= 2 else None
        return cls(float(value), grad, hess)

    @property
    def size(self):
        return self.grad.shape[0]

    def is_constant(self):
        if np.any(self.grad):
            return False
        return self.hess is None or not np.any(self.hess)

    def __add__(self, other):
        hess = None if self.hess is None else self.hess + other.hess
        return Dual2(self.value + other.value, self.grad + other.grad, hess)

    def __sub__(self, other):
        hess = None if self.hess is None else self.hess - other.hess
        return Dual2(self.value - other.value, self.grad - other.grad, hess)

    def __neg__(self):
        hess = None if self.hess is None else -self.hess
        return Dual2(-self.value, -self.grad, hess)

    def __mul__(self, other):
        grad = self.value * other.grad + other.value * self.grad
        hess = None
        if self.hess is not None:
            cross = np.outer(self.grad, other.grad)
            hess = self.value * other.hess + other.value * self.hess + (cross + cross.T)
        return Dual2(self.value * other.value, grad, hess)

    def scale(self, factor):
        hess = None if self.hess is None else factor * self.hess
        return Dual2(factor * self.value, factor * self.grad, hess)

    def apply(self, f0, f1, f2):
        """Chain rule for a scalar function with value f0, derivative f1, second derivative f2."""
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * np.outer(self.grad, self.grad)
        return Dual2(f0, grad, hess)

    def reciprocal(self):
        x = self.value
        return self.apply(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))

    def __truediv__(self, other):
        return self * other.reciprocal()

    def sin(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self.apply(s, c, -s)

    def cos(self):
        s, c = math.sin(self.value), math.cos(self.value)
        return self.apply(c, -s, -c)

    def tan(self):
        t = math.tan(self.value)
        sec2 = 1.0 + t * t
        return self.apply(t, sec2, 2.0 * t * sec2)

    def exp(self):
        e = math.exp(self.value)
        return self.apply(e, e, e)

    def log(self):
        x = self.value
        return self.apply(math.log(x), 1.0 / x, -1.0 / (x * x))

    def sqrt(self):
        r = math.sqrt(self.value)
        return self.apply(r, 0.5 / r, -0.25 / (r * self.value))

    def abs(self):
        sign = math.copysign(1.0, self.value) if self.value != 0.0 else 0.0
        return self.apply(abs(self.value), sign, 0.0)

    def power_const(self, exponent):
        """self ** c for a constant exponent c."""
        x = self.value
        f0 = x**exponent
        f1 = exponent * x ** (exponent - 1.0) if exponent != 0.0 else 0.0
        if exponent in (0.0, 1.0):
            f2 = 0.0
        else:
            f2 = exponent * (exponent - 1.0) * x ** (exponent - 2.0)
        return self.apply(f0, f1, f2)

    def __repr__(self):
        return f"Dual2({self.value!r}, grad={self.grad.tolist()!r})"

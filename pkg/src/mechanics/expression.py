"""Expression trees over coordinates, velocities and time.

Trees are immutable. They are evaluated either on plain floats or on Dual2
numbers, which gives exact first and second partial derivatives without
finite differences.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from utils.dual import Dual2
from utils.errors import ExpressionDomainError, UnboundVariableError

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")
TIME = "t"
VELOCITY_PREFIX = "v_"


def velocity_name(coord):
    return f"{VELOCITY_PREFIX}{coord}"


@dataclass(frozen=True)
class Number:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Variable:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Negate:
    operand: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: object
    right: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MetricInverse:
    """Entry (row, col) of the inverse of a metric given as a grid of nodes.

    Only built programmatically (nested symmetric products); it has no surface syntax.
    """

    row: int
    col: int
    metric: tuple
    offset: int = field(default=0, compare=False)


ZERO = Number(0.0)
ONE = Number(1.0)


# ---------------------------------------------------------------------------
# Construction helpers with light constant folding
# ---------------------------------------------------------------------------


def _is_number(node, value=None):
    return isinstance(node, Number) and (value is None or node.value == value)


def add(a, b):
    if _is_number(a, 0.0):
        return b
    if _is_number(b, 0.0):
        return a
    if _is_number(a) and _is_number(b):
        return Number(a.value + b.value)
    return BinaryOp("+", a, b)


def sub(a, b):
    if _is_number(b, 0.0):
        return a
    if _is_number(a, 0.0):
        return neg(b)
    if _is_number(a) and _is_number(b):
        return Number(a.value - b.value)
    return BinaryOp("-", a, b)


def mul(a, b):
    if _is_number(a, 0.0) or _is_number(b, 0.0):
        return ZERO
    if _is_number(a, 1.0):
        return b
    if _is_number(b, 1.0):
        return a
    if _is_number(a) and _is_number(b):
        return Number(a.value * b.value)
    return BinaryOp("*", a, b)


def div(a, b):
    if _is_number(a, 0.0):
        return ZERO
    if _is_number(b, 1.0):
        return a
    return BinaryOp("/", a, b)


def neg(a):
    if _is_number(a):
        return Number(-a.value)
    if isinstance(a, Negate):
        return a.operand
    return Negate(a)


def power(a, b):
    if _is_number(b, 1.0):
        return a
    if _is_number(b, 0.0):
        return ONE
    return BinaryOp("^", a, b)


def call(func, arg):
    return Call(func, arg)


def total(nodes):
    result = ZERO
    for node in nodes:
        result = add(result, node)
    return result


# ---------------------------------------------------------------------------
# Printing, traversal
# ---------------------------------------------------------------------------


def _format_number(value):
    if value.is_integer() and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(value)
    return text if value >= 0 else f"(-{text.lstrip('-')})"


def to_text(node):
    """Render a tree so that parsing the text yields an equivalent tree."""
    match node:
        case Number(value=value):
            return _format_number(float(value))
        case Variable(name=name):
            return name
        case Negate(operand=operand):
            return f"(-{to_text(operand)})"
        case BinaryOp(op=op, left=left, right=right):
            return f"({to_text(left)} {op} {to_text(right)})"
        case Call(func=func, arg=arg):
            return f"{func}({to_text(arg)})"
        case MetricInverse(row=row, col=col):
            return f"ginv[{row + 1}][{col + 1}]"
    raise TypeError(f"Unsupported expression node {node!r}")


def free_symbols(node):
    found = set()
    stack = [node]
    while stack:
        item = stack.pop()
        match item:
            case Variable(name=name):
                found.add(name)
            case Negate(operand=operand):
                stack.append(operand)
            case BinaryOp(left=left, right=right):
                stack.extend((left, right))
            case Call(arg=arg):
                stack.append(arg)
            case MetricInverse(metric=metric):
                stack.extend(entry for row in metric for entry in row)
    return frozenset(found)


def rename(node, mapping):
    """Return a copy of the tree with variables renamed through mapping."""
    match node:
        case Number():
            return node
        case Variable(name=name, offset=offset):
            return Variable(mapping.get(name, name), offset)
        case Negate(operand=operand, offset=offset):
            return Negate(rename(operand, mapping), offset)
        case BinaryOp(op=op, left=left, right=right, offset=offset):
            return BinaryOp(op, rename(left, mapping), rename(right, mapping), offset)
        case Call(func=func, arg=arg, offset=offset):
            return Call(func, rename(arg, mapping), offset)
        case MetricInverse(row=row, col=col, metric=metric):
            renamed = tuple(tuple(rename(e, mapping) for e in r) for r in metric)
            return MetricInverse(row, col, renamed)
    raise TypeError(f"Unsupported expression node {node!r}")


# ---------------------------------------------------------------------------
# Symbolic derivative (used to nest field products exactly)
# ---------------------------------------------------------------------------


def differentiate(node, var):
    match node:
        case Number():
            return ZERO
        case Variable(name=name):
            return ONE if name == var else ZERO
        case Negate(operand=operand):
            return neg(differentiate(operand, var))
        case BinaryOp(op="+", left=u, right=v):
            return add(differentiate(u, var), differentiate(v, var))
        case BinaryOp(op="-", left=u, right=v):
            return sub(differentiate(u, var), differentiate(v, var))
        case BinaryOp(op="*", left=u, right=v):
            return add(mul(differentiate(u, var), v), mul(u, differentiate(v, var)))
        case BinaryOp(op="/", left=u, right=v):
            du, dv = differentiate(u, var), differentiate(v, var)
            return sub(div(du, v), div(mul(u, dv), mul(v, v)))
        case BinaryOp(op="^", left=u, right=v):
            du = differentiate(u, var)
            if var not in free_symbols(v):
                return mul(mul(v, power(u, sub(v, ONE))), du)
            dv = differentiate(v, var)
            inner = add(mul(dv, call("log", u)), div(mul(v, du), u))
            return mul(node, inner)
        case Call(func=func, arg=u):
            du = differentiate(u, var)
            if _is_number(du, 0.0):
                return ZERO
            return mul(_outer_derivative(func, u), du)
        case MetricInverse(row=k, col=l, metric=metric):
            n = len(metric)
            terms = []
            for a in range(n):
                for b in range(n):
                    dg = differentiate(metric[a][b], var)
                    if _is_number(dg, 0.0):
                        continue
                    left = MetricInverse(k, a, metric)
                    right = MetricInverse(b, l, metric)
                    terms.append(mul(mul(left, dg), right))
            return neg(total(terms))
    raise TypeError(f"Unsupported expression node {node!r}")


def _outer_derivative(func, u):
    if func == "sin":
        return call("cos", u)
    if func == "cos":
        return neg(call("sin", u))
    if func == "tan":
        return add(ONE, power(call("tan", u), Number(2.0)))
    if func == "exp":
        return call("exp", u)
    if func == "log":
        return div(ONE, u)
    if func == "sqrt":
        return div(ONE, mul(Number(2.0), call("sqrt", u)))
    if func == "abs":
        return div(u, call("abs", u))
    raise TypeError(f"Unknown function '{func}'")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _domain(message, node):
    return ExpressionDomainError(message, getattr(node, "offset", 0), to_text(node))


def _lookup(bindings, name):
    try:
        return float(bindings[name])
    except KeyError:
        raise UnboundVariableError(name) from None


def _float_power(base, exponent, node):
    if base < 0.0 and not float(exponent).is_integer():
        raise _domain("negative base with non-integer exponent", node)
    if base == 0.0 and exponent < 0.0:
        raise _domain("division by zero", node)
    try:
        return base**exponent
    except OverflowError:
        raise _domain("overflow", node) from None


def _float_call(func, x, node):
    try:
        if func == "log":
            if x <= 0.0:
                raise _domain("log of non-positive value", node)
            return math.log(x)
        if func == "sqrt":
            if x < 0.0:
                raise _domain("sqrt of negative value", node)
            return math.sqrt(x)
        if func == "abs":
            return abs(x)
        return getattr(math, func)(x)
    except OverflowError:
        raise _domain("overflow", node) from None


def eval_node(node, bindings):
    match node:
        case Number(value=value):
            return value
        case Variable(name=name):
            return _lookup(bindings, name)
        case Negate(operand=operand):
            return -eval_node(operand, bindings)
        case BinaryOp(op=op, left=left, right=right):
            a = eval_node(left, bindings)
            b = eval_node(right, bindings)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if b == 0.0:
                    raise _domain("division by zero", node)
                return a / b
            return _float_power(a, b, node)
        case Call(func=func, arg=arg):
            return _float_call(func, eval_node(arg, bindings), node)
        case MetricInverse(row=row, col=col, metric=metric):
            grid = np.array([[eval_node(e, bindings) for e in r] for r in metric])
            try:
                return float(np.linalg.inv(grid)[row, col])
            except np.linalg.LinAlgError:
                raise _domain("singular metric", node) from None
    raise TypeError(f"Unsupported expression node {node!r}")


def jet_node(node, bindings, index, order=2):
    """Evaluate a tree on Dual2 numbers seeded at the variables listed in index."""
    size = len(index)
    match node:
        case Number(value=value):
            return Dual2.constant(value, size, order)
        case Variable(name=name):
            value = _lookup(bindings, name)
            if name in index:
                return Dual2.variable(value, index[name], size, order)
            return Dual2.constant(value, size, order)
        case Negate(operand=operand):
            return -jet_node(operand, bindings, index, order)
        case BinaryOp(op=op, left=left, right=right):
            a = jet_node(left, bindings, index, order)
            b = jet_node(right, bindings, index, order)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if b.value == 0.0:
                    raise _domain("division by zero", node)
                return a / b
            return _jet_power(a, b, node, order)
        case Call(func=func, arg=arg):
            return _jet_call(func, jet_node(arg, bindings, index, order), node, order)
        case MetricInverse(row=row, col=col, metric=metric):
            grid = [[jet_node(e, bindings, index, order) for e in r] for r in metric]
            return _jet_inverse(grid, node, order)[row][col]
    raise TypeError(f"Cannot differentiate expression node {node!r}")


def _jet_inverse(grid, node, order):
    """Inverse of a square grid of jets by Gauss-Jordan elimination with partial pivoting."""
    n = len(grid)
    size = grid[0][0].size
    rows = [
        list(row) + [Dual2.constant(float(i == j), size, order) for j in range(n)]
        for i, row in enumerate(grid)
    ]
    for k in range(n):
        pivot = max(range(k, n), key=lambda i: abs(rows[i][k].value))
        if rows[pivot][k].value == 0.0:
            raise _domain("singular metric", node)
        rows[k], rows[pivot] = rows[pivot], rows[k]
        head = rows[k][k]
        rows[k] = [x / head for x in rows[k]]
        for i in range(n):
            if i != k:
                factor = rows[i][k]
                rows[i] = [x - factor * y for x, y in zip(rows[i], rows[k])]
    return [row[n:] for row in rows]


def _jet_power(a, b, node, order):
    if b.is_constant():
        value = _float_power(a.value, b.value, node)
        if a.is_constant():
            return Dual2.constant(value, a.size, order)
        try:
            return a.power_const(b.value)
        except (ZeroDivisionError, OverflowError):
            raise _domain("derivative undefined", node) from None
    if a.value <= 0.0:
        raise _domain("non-positive base with variable exponent", node)
    return (b * a.log()).exp()


def _jet_call(func, x, node, order):
    if func == "log" and x.value <= 0.0:
        raise _domain("log of non-positive value", node)
    if func == "sqrt":
        if x.value < 0.0:
            raise _domain("sqrt of negative value", node)
        if x.value == 0.0:
            if x.is_constant():
                return Dual2.constant(0.0, x.size, order)
            raise _domain("derivative of sqrt undefined at 0", node)
    try:
        return getattr(x, func)()
    except OverflowError:
        raise _domain("overflow", node) from None


# ---------------------------------------------------------------------------
# Public wrapper
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with the symbol table it was checked against."""

    root: object
    symbols: tuple = ()
    text: str = ""

    @cached_property
    def free_symbols(self):
        return free_symbols(self.root)

    @property
    def is_constant(self):
        return not self.free_symbols

    def evaluate(self, bindings):
        return float(eval_node(self.root, bindings))

    def jet(self, bindings, variables, order=2):
        index = {name: i for i, name in enumerate(variables)}
        return jet_node(self.root, bindings, index, order)

    def partial(self, var, bindings):
        return float(self.jet(bindings, (var,), order=1).grad[0])

    def second_partial(self, var1, var2, bindings):
        seeds = tuple(sorted({var1, var2}))
        hess = self.jet(bindings, seeds, order=2).hess
        return float(hess[seeds.index(var1), seeds.index(var2)])

    def derivative(self, var):
        return Expression(differentiate(self.root, var), self.symbols)

    def renamed(self, mapping):
        symbols = tuple(mapping.get(s, s) for s in self.symbols)
        return Expression(rename(self.root, mapping), symbols)

    def __str__(self):
        return to_text(self.root)


def constant(value, symbols=()):
    return Expression(Number(float(value)), tuple(symbols))


def evaluate(expr, bindings):
    return expr.evaluate(bindings)


def partial(expr, var, bindings):
    return expr.partial(var, bindings)


def second_partial(expr, var1, var2, bindings):
    return expr.second_partial(var1, var2, bindings)

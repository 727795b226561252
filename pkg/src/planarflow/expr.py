"""Expression trees over the plane variables x1, x2, the time t and named parameters.

The node set is fixed: constants, the three variables, parameters, the ring
operations (+, -, *, /, unary -, ^) and the function heads sin, cos, exp, ln,
sqrt, abs.  Trees are immutable and hashable; structural equality is dataclass
equality.  Evaluation is strict about domains (see :func:`evaluate`), while
:func:`compile_fn` produces a fast, unchecked numeric callable for integrators
and grid sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .errors import DomainError

__all__ = [
    "Expr", "Constant", "Variable", "Parameter",
    "Add", "Sub", "Mul", "Div", "Neg", "Pow",
    "Sin", "Cos", "Exp", "Ln", "Sqrt", "Abs",
    "X1", "X2", "T", "Point2",
    "as_expr", "free_names", "substitute", "bind_params",
    "evaluate", "differentiate", "serialize", "compile_fn", "compile_pair",
]

Real = Union[int, float]

VARIABLE_NAMES = ("x1", "x2", "t")


class Expr:
    """Base node. Subclasses are frozen dataclasses; arithmetic builds new trees."""

    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __pow__(self, other):
        return Pow(self, as_expr(other))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return serialize(self)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Constant(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


@dataclass(frozen=True)
class Constant(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Variable(Expr):
    name: str  # one of x1, x2, t

    def __post_init__(self):
        if self.name not in VARIABLE_NAMES:
            raise ValueError(f"variable must be one of {VARIABLE_NAMES}, got {self.name!r}")


@dataclass(frozen=True)
class Parameter(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr


@dataclass(frozen=True)
class Ln(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    arg: Expr


@dataclass(frozen=True)
class Abs(Expr):
    arg: Expr


X1 = Variable("x1")
X2 = Variable("x2")
T = Variable("t")

_BINARY = (Add, Sub, Mul, Div)
_FUNCTIONS = {Sin: "sin", Cos: "cos", Exp: "exp", Ln: "ln", Sqrt: "sqrt", Abs: "abs"}


@dataclass(frozen=True)
class Point2:
    """A point in the plane; components must be finite."""

    x1: float
    x2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "x2", float(self.x2))
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError("Point2 components must be finite")

    def as_tuple(self) -> tuple:
        return (self.x1, self.x2)


def free_names(e: Expr) -> frozenset:
    """Names of all variables and parameters appearing in the tree."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, (Variable, Parameter)):
            out.add(node.name)
        elif isinstance(node, _BINARY):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Pow):
            stack.append(node.base)
            stack.append(node.exponent)
        elif isinstance(node, (Neg, Sin, Cos, Exp, Ln, Sqrt, Abs)):
            stack.append(node.arg)
    return frozenset(out)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables/parameters by name with the given subtrees."""
    if isinstance(e, (Variable, Parameter)):
        return mapping.get(e.name, e)
    if isinstance(e, Constant):
        return e
    if isinstance(e, _BINARY):
        return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), substitute(e.exponent, mapping))
    if isinstance(e, (Neg, Sin, Cos, Exp, Ln, Sqrt, Abs)):
        return type(e)(substitute(e.arg, mapping))
    raise TypeError(f"unknown node {type(e).__name__}")


def bind_params(e: Expr, params: Mapping[str, Real]) -> Expr:
    """Substitute numeric values for parameters, leaving variables untouched."""
    return substitute(e, {k: Constant(float(v)) for k, v in params.items()})


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(e: Expr, p, t: float = 0.0, params: Mapping[str, Real] | None = None) -> float:
    """Evaluate at a point, raising DomainError instead of returning NaN/inf.

    ``p`` may be a Point2 or any (x1, x2) pair.  All parameters occurring in
    the tree must be bound through ``params``.
    """
    if isinstance(p, Point2):
        x1, x2 = p.x1, p.x2
    else:
        x1, x2 = float(p[0]), float(p[1])
    env = {"x1": x1, "x2": x2, "t": float(t)}
    if params:
        for k, v in params.items():
            env[k] = float(v)
    value = _eval(e, env)
    if not math.isfinite(value):
        raise DomainError(f"evaluation produced a non-finite value for {serialize(e)}")
    return value


def _eval(e: Expr, env: dict) -> float:
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Variable):
        return env[e.name]
    if isinstance(e, Parameter):
        try:
            return env[e.name]
        except KeyError:
            raise DomainError(f"unbound parameter {e.name!r}") from None
    if isinstance(e, Add):
        return _eval(e.left, env) + _eval(e.right, env)
    if isinstance(e, Sub):
        return _eval(e.left, env) - _eval(e.right, env)
    if isinstance(e, Mul):
        return _eval(e.left, env) * _eval(e.right, env)
    if isinstance(e, Div):
        den = _eval(e.right, env)
        if den == 0.0:
            raise DomainError("division by zero")
        return _eval(e.left, env) / den
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Pow):
        return _eval_pow(_eval(e.base, env), _eval(e.exponent, env))
    if isinstance(e, Sin):
        return math.sin(_eval(e.arg, env))
    if isinstance(e, Cos):
        return math.cos(_eval(e.arg, env))
    if isinstance(e, Exp):
        try:
            return math.exp(_eval(e.arg, env))
        except OverflowError:
            raise DomainError("exp overflow") from None
    if isinstance(e, Ln):
        v = _eval(e.arg, env)
        if v <= 0.0:
            raise DomainError(f"ln of non-positive value {v}")
        return math.log(v)
    if isinstance(e, Sqrt):
        v = _eval(e.arg, env)
        if v < 0.0:
            raise DomainError(f"sqrt of negative value {v}")
        return math.sqrt(v)
    if isinstance(e, Abs):
        return abs(_eval(e.arg, env))
    raise TypeError(f"unknown node {type(e).__name__}")


def _eval_pow(base: float, exponent: float) -> float:
    # Integer exponents use repeated multiplication; fractional exponents go
    # through exp(e*ln(b)) and therefore require a positive base.
    if exponent == math.floor(exponent) and abs(exponent) <= 2**31:
        n = int(exponent)
        if n == 0:
            return 1.0
        if base == 0.0 and n < 0:
            raise DomainError("0 raised to a negative power")
        try:
            return _ipow(base, n)
        except OverflowError:
            raise DomainError("pow overflow") from None
    if base <= 0.0:
        raise DomainError(f"non-integer power of non-positive base {base}")
    try:
        return math.exp(exponent * math.log(base))
    except OverflowError:
        raise DomainError("pow overflow") from None


def _ipow(base: float, n: int) -> float:
    if n < 0:
        return 1.0 / _ipow(base, -n)
    result = 1.0
    acc = base
    while n:
        if n & 1:
            result *= acc
        acc *= acc
        n >>= 1
    return result


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative with respect to x1, x2 or t.

    Closed over the node set: abs differentiates through u/|u|, which
    evaluates to the sign away from zero and raises DomainError at zero.
    """
    if var not in VARIABLE_NAMES:
        raise ValueError(f"var must be one of {VARIABLE_NAMES}, got {var!r}")
    return _diff(e, var)


_ZERO = Constant(0.0)
_ONE = Constant(1.0)


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, (Constant, Parameter)):
        return _ZERO
    if isinstance(e, Variable):
        return _ONE if e.name == v else _ZERO
    if isinstance(e, Add):
        return Add(_diff(e.left, v), _diff(e.right, v))
    if isinstance(e, Sub):
        return Sub(_diff(e.left, v), _diff(e.right, v))
    if isinstance(e, Mul):
        return Add(Mul(_diff(e.left, v), e.right), Mul(e.left, _diff(e.right, v)))
    if isinstance(e, Div):
        num = Sub(Mul(_diff(e.left, v), e.right), Mul(e.left, _diff(e.right, v)))
        return Div(num, Pow(e.right, Constant(2.0)))
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, v))
    if isinstance(e, Pow):
        if isinstance(e.exponent, Constant):
            n = e.exponent.value
            return Mul(Mul(Constant(n), Pow(e.base, Constant(n - 1.0))), _diff(e.base, v))
        # d(b^e) = b^e * (e' ln b + e b'/b)
        term = Add(Mul(_diff(e.exponent, v), Ln(e.base)),
                   Mul(e.exponent, Div(_diff(e.base, v), e.base)))
        return Mul(e, term)
    if isinstance(e, Sin):
        return Mul(Cos(e.arg), _diff(e.arg, v))
    if isinstance(e, Cos):
        return Neg(Mul(Sin(e.arg), _diff(e.arg, v)))
    if isinstance(e, Exp):
        return Mul(e, _diff(e.arg, v))
    if isinstance(e, Ln):
        return Div(_diff(e.arg, v), e.arg)
    if isinstance(e, Sqrt):
        return Div(_diff(e.arg, v), Mul(Constant(2.0), Sqrt(e.arg)))
    if isinstance(e, Abs):
        return Mul(Div(e.arg, Abs(e.arg)), _diff(e.arg, v))
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt_number(v: float) -> str:
    if v == math.floor(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


_ATOMIC = (Constant, Variable, Parameter, Sin, Cos, Exp, Ln, Sqrt, Abs)


def _is_atom_text(e: Expr) -> bool:
    # Nodes that reparse as a single grammar atom.
    return isinstance(e, _ATOMIC) and not (isinstance(e, Constant) and e.value < 0)


def serialize(e: Expr) -> str:
    """Text form accepted by the parser. Canonical trees round-trip structurally."""
    if isinstance(e, Constant):
        return _fmt_number(e.value) if e.value >= 0 else "-" + _fmt_number(-e.value)
    if isinstance(e, (Variable, Parameter)):
        return e.name
    for cls, name in _FUNCTIONS.items():
        if isinstance(e, cls):
            return f"{name}({serialize(e.arg)})"
    if isinstance(e, Neg):
        inner = serialize(e.arg) if _is_atom_text(e.arg) else f"({serialize(e.arg)})"
        return "-" + inner
    if isinstance(e, Pow):
        base = serialize(e.base) if _is_atom_text(e.base) else f"({serialize(e.base)})"
        expo = serialize(e.exponent) if _is_atom_text(e.exponent) else f"({serialize(e.exponent)})"
        return f"{base}^{expo}"
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        left = serialize(e.left)
        if isinstance(e.left, (Add, Sub, Neg)):
            left = f"({left})"
        right = serialize(e.right)
        if isinstance(e.right, (Add, Sub, Mul, Div, Neg)):
            right = f"({right})"
        return f"{left}{op}{right}"
    if isinstance(e, (Add, Sub)):
        op = " + " if isinstance(e, Add) else " - "
        left = serialize(e.left)
        right = serialize(e.right)
        if isinstance(e.right, (Add, Sub)) or (isinstance(e.right, Neg)):
            right = f"({right})"
        return f"{left}{op}{right}"
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------------------
# compilation to fast numeric callables
# ---------------------------------------------------------------------------

_MATH_FUNCS = {"sin": "math.sin", "cos": "math.cos", "exp": "math.exp",
               "ln": "math.log", "sqrt": "math.sqrt", "abs": "abs"}
_NUMPY_FUNCS = {"sin": "np.sin", "cos": "np.cos", "exp": "np.exp",
                "ln": "np.log", "sqrt": "np.sqrt", "abs": "np.abs"}


def _codegen(e: Expr, params: Mapping[str, Real], funcs: Mapping[str, str]) -> str:
    if isinstance(e, Constant):
        return f"({e.value!r})"
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Parameter):
        if e.name not in params:
            raise DomainError(f"unbound parameter {e.name!r}")
        return f"({float(params[e.name])!r})"
    if isinstance(e, Add):
        return f"({_codegen(e.left, params, funcs)} + {_codegen(e.right, params, funcs)})"
    if isinstance(e, Sub):
        return f"({_codegen(e.left, params, funcs)} - {_codegen(e.right, params, funcs)})"
    if isinstance(e, Mul):
        return f"({_codegen(e.left, params, funcs)} * {_codegen(e.right, params, funcs)})"
    if isinstance(e, Div):
        return f"({_codegen(e.left, params, funcs)} / {_codegen(e.right, params, funcs)})"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, params, funcs)})"
    if isinstance(e, Pow):
        if isinstance(e.exponent, Constant) and e.exponent.value == math.floor(e.exponent.value) \
                and abs(e.exponent.value) <= 2**31:
            return f"({_codegen(e.base, params, funcs)} ** {int(e.exponent.value)})"
        return f"({_codegen(e.base, params, funcs)} ** {_codegen(e.exponent, params, funcs)})"
    for cls, name in _FUNCTIONS.items():
        if isinstance(e, cls):
            return f"{funcs[name]}({_codegen(e.arg, params, funcs)})"
    raise TypeError(f"unknown node {type(e).__name__}")


def compile_fn(e: Expr, params: Mapping[str, Real] | None = None,
               mode: str = "numpy") -> Callable:
    """Compile to ``f(x1, x2, t=0.0) -> value``.

    ``mode="numpy"`` vectorizes over arrays; ``mode="math"`` is fastest for
    scalar call sites such as time steppers.  The compiled path does not
    perform domain checks (numpy mode propagates NaN, math mode may raise
    ValueError); callers are expected to stay inside the field's domain.
    """
    params = params or {}
    funcs = _NUMPY_FUNCS if mode == "numpy" else _MATH_FUNCS
    src = _codegen(e, params, funcs)
    namespace = {"math": math}
    if mode == "numpy":
        import numpy as np
        namespace["np"] = np
    return eval(f"lambda x1, x2, t=0.0: {src}", namespace)  # noqa: S307 - generated from our own AST


def compile_pair(e1: Expr, e2: Expr, params: Mapping[str, Real] | None = None,
                 mode: str = "numpy") -> Callable:
    """Compile two components into one ``f(x1, x2, t=0.0) -> (v1, v2)`` callable."""
    params = params or {}
    funcs = _NUMPY_FUNCS if mode == "numpy" else _MATH_FUNCS
    src1 = _codegen(e1, params, funcs)
    src2 = _codegen(e2, params, funcs)
    namespace = {"math": math}
    if mode == "numpy":
        import numpy as np
        namespace["np"] = np
    return eval(f"lambda x1, x2, t=0.0: ({src1}, {src2})", namespace)  # noqa: S307


def finite_difference(e: Expr, var: str, p, t: float = 0.0,
                      params: Mapping[str, Real] | None = None, h: float = 1e-5) -> float:
    """Central finite difference of ``evaluate`` — an independent check on differentiate."""
    if isinstance(p, Point2):
        x1, x2 = p.x1, p.x2
    else:
        x1, x2 = float(p[0]), float(p[1])
    if var == "x1":
        return (evaluate(e, (x1 + h, x2), t, params) - evaluate(e, (x1 - h, x2), t, params)) / (2 * h)
    if var == "x2":
        return (evaluate(e, (x1, x2 + h), t, params) - evaluate(e, (x1, x2 - h), t, params)) / (2 * h)
    if var == "t":
        return (evaluate(e, (x1, x2), t + h, params) - evaluate(e, (x1, x2), t - h, params)) / (2 * h)
    raise ValueError(f"var must be one of {VARIABLE_NAMES}")

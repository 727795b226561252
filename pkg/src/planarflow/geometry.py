"""Coordinate mappings of the plane: Jacobians, 2x2 polar decomposition,
metric tensors, and the transformed Helmholtz decomposition with its noise rule.

A mapping x = f(y) is written in the canonical variables (the components f1,
f2 are expressions in x1, x2, which play the role of y).  Its Jacobian J = ∇f
factors as J = Q h with Q orthogonal and h symmetric positive definite, and
g = hᵀh = JᵀJ is the metric tensor.  Under f, a Cartesian field
u = -∇V + S∇H turns into

    -g⁻¹ ∇Ṽ ± (1/√det g) S ∇H̃,      Ṽ = V∘f,  H̃ = H∘f,

with the sign given by det Q, and additive noise transforms through Ξ̃ = QᵀΞ.

Note on conventions: the symmetric polar factor h is used throughout.  It
coincides with a triangular QR factor only when JᵀJ is diagonal (true for all
the built-in example mappings, not in general).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, NotOrthogonal, SingularJacobian
from .expr import (Abs, Constant, Div, Expr, Mul, Neg, Sqrt, Sub,
                   compile_pair, differentiate, evaluate, substitute)
from .grid import Grid2
from .simplify import is_zero_expr, simplify

__all__ = [
    "VectorField2", "Matrix2", "Matrix2Field", "Mapping2", "PolarFactors",
    "jacobian", "polar_decompose", "polar_factors_field", "metric_tensor",
    "transform_system", "pushforward", "transform_noise", "compose",
    "DEFAULT_DOMAIN",
]

DEFAULT_DOMAIN = Grid2(-2.0, 2.0, -2.0, 2.0, 32, 32)


@dataclass(frozen=True)
class VectorField2:
    """A planar velocity field (u1(x,t), u2(x,t)) as a pair of expressions."""

    u1: Expr
    u2: Expr

    def evaluate(self, p, t: float = 0.0, params=None) -> np.ndarray:
        return np.array([evaluate(self.u1, p, t, params),
                         evaluate(self.u2, p, t, params)])

    def compiled(self, params=None, mode: str = "numpy") -> Callable:
        return compile_pair(self.u1, self.u2, params, mode)

    def map_args(self, fn) -> "VectorField2":
        return VectorField2(fn(self.u1), fn(self.u2))


@dataclass(frozen=True)
class Matrix2:
    """Numeric 2x2 matrix with finite entries."""

    a11: float
    a12: float
    a21: float
    a22: float

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise ValueError("Matrix2 entries must be finite")

    @classmethod
    def from_array(cls, a) -> "Matrix2":
        a = np.asarray(a, dtype=float)
        return cls(a[0, 0], a[0, 1], a[1, 0], a[1, 1])

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21


@dataclass(frozen=True)
class Matrix2Field:
    """2x2 matrix of expressions sharing the canonical variable namespace."""

    e11: Expr
    e12: Expr
    e21: Expr
    e22: Expr

    @classmethod
    def identity(cls) -> "Matrix2Field":
        one, zero = Constant(1.0), Constant(0.0)
        return cls(one, zero, zero, one)

    @classmethod
    def diagonal(cls, d1: Expr, d2: Expr) -> "Matrix2Field":
        zero = Constant(0.0)
        return cls(d1, zero, zero, d2)

    @classmethod
    def constant(cls, m: Matrix2) -> "Matrix2Field":
        return cls(Constant(m.a11), Constant(m.a12), Constant(m.a21), Constant(m.a22))

    def entries(self):
        return (self.e11, self.e12, self.e21, self.e22)

    def transpose(self) -> "Matrix2Field":
        return Matrix2Field(self.e11, self.e21, self.e12, self.e22)

    def det_expr(self) -> Expr:
        return simplify(Sub(Mul(self.e11, self.e22), Mul(self.e12, self.e21)))

    def evaluate(self, p, t: float = 0.0, params=None) -> np.ndarray:
        return np.array([[evaluate(self.e11, p, t, params), evaluate(self.e12, p, t, params)],
                         [evaluate(self.e21, p, t, params), evaluate(self.e22, p, t, params)]])

    def apply(self, v: VectorField2) -> VectorField2:
        return VectorField2(
            simplify(Mul(self.e11, v.u1) + Mul(self.e12, v.u2)),
            simplify(Mul(self.e21, v.u1) + Mul(self.e22, v.u2)),
        )


InverseSpec = Union[Tuple[Expr, Expr], Callable, None]


@dataclass(frozen=True)
class Mapping2:
    """A smooth mapping x = f(y) of the plane, written in canonical variables.

    ``inverse`` is either a pair of expressions (g1, g2) or a vectorized
    callable (x1, x2) -> (y1, y2) for inverses (like atan2) that fall outside
    the expression grammar.  ``domain`` is the window on which the Jacobian
    determinant is checked by sampling; ``note`` is free text describing it.
    """

    f1: Expr
    f2: Expr
    inverse: InverseSpec = None
    domain: Optional[Grid2] = None
    note: str = ""

    def probe(self) -> Grid2:
        return self.domain if self.domain is not None else DEFAULT_DOMAIN

    def apply(self, p, t: float = 0.0, params=None) -> tuple:
        return (evaluate(self.f1, p, t, params), evaluate(self.f2, p, t, params))

    def apply_inverse(self, p, t: float = 0.0, params=None) -> tuple:
        if self.inverse is None:
            raise DomainError("mapping has no declared inverse")
        if callable(self.inverse):
            y1, y2 = self.inverse(p[0] if not hasattr(p, "x1") else p.x1,
                                  p[1] if not hasattr(p, "x2") else p.x2)
            return (float(y1), float(y2))
        g1, g2 = self.inverse
        return (evaluate(g1, p, t, params), evaluate(g2, p, t, params))


@dataclass(frozen=True)
class PolarFactors:
    """J = Q h with Q orthogonal (det ±1) and h symmetric positive definite."""

    Q: Matrix2
    h: Matrix2
    detQ: int


def compose(e: Expr, f: Mapping2) -> Expr:
    """Substitute the mapping components for the spatial variables: e(f(y), t)."""
    return substitute(e, {"x1": f.f1, "x2": f.f2})


def jacobian(f: Mapping2) -> Matrix2Field:
    """Entrywise ∂f_m/∂y_k as expressions."""
    return Matrix2Field(
        simplify(differentiate(f.f1, "x1")), simplify(differentiate(f.f1, "x2")),
        simplify(differentiate(f.f2, "x1")), simplify(differentiate(f.f2, "x2")),
    )


def polar_decompose(J: Matrix2) -> PolarFactors:
    """Closed-form 2x2 polar decomposition.

    Uses h = sqrt(JᵀJ) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M)) for
    M = JᵀJ, then Q = J h⁻¹.  Requires det J away from zero.
    """
    a = J.as_array()
    det_j = J.det
    if abs(det_j) < 1e-14:
        raise SingularJacobian(f"|det J| = {abs(det_j):.3e} < 1e-14")
    m = a.T @ a
    det_m = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    s = math.sqrt(det_m)
    denom = math.sqrt(m[0, 0] + m[1, 1] + 2.0 * s)
    h = (m + s * np.eye(2)) / denom
    q = a @ np.linalg.inv(h)
    return PolarFactors(Matrix2.from_array(q), Matrix2.from_array(h),
                        1 if det_j > 0 else -1)


def polar_factors_field(f: Mapping2, params=None) -> Tuple[Matrix2Field, Matrix2Field]:
    """Symbolic polar factors, available when JᵀJ simplifies to a diagonal field.

    For non-diagonal metrics the closed form explodes; evaluate pointwise with
    :func:`polar_decompose` instead.
    """
    J = jacobian(f)
    g, _ = metric_tensor(f)
    if not (is_zero_expr(g.e12) and is_zero_expr(g.e21)):
        raise ValueError("JᵀJ is not diagonal; use pointwise polar_decompose")
    h1, h2 = Sqrt(g.e11), Sqrt(g.e22)
    h = Matrix2Field.diagonal(simplify(h1), simplify(h2))
    q = Matrix2Field(
        simplify(Div(J.e11, h1)), simplify(Div(J.e12, h2)),
        simplify(Div(J.e21, h1)), simplify(Div(J.e22, h2)),
    )
    return q, h


def metric_tensor(f: Mapping2) -> Tuple[Matrix2Field, Expr]:
    """g = JᵀJ and det g, both symbolic (det g is positive wherever J is regular)."""
    J = jacobian(f)
    g11 = simplify(Mul(J.e11, J.e11) + Mul(J.e21, J.e21))
    g12 = simplify(Mul(J.e11, J.e12) + Mul(J.e21, J.e22))
    g22 = simplify(Mul(J.e12, J.e12) + Mul(J.e22, J.e22))
    g = Matrix2Field(g11, g12, g12, g22)
    detg = simplify(Sub(Mul(g11, g22), Mul(g12, g12)))
    return g, detg


def _sample_detj_sign(f: Mapping2, params=None, times=(0.0,)) -> int:
    """Sign of det J sampled over the declared domain; must not vanish or flip."""
    J = jacobian(f)
    det = simplify(Sub(Mul(J.e11, J.e22), Mul(J.e12, J.e21)))
    sign = 0
    for x1, x2 in f.probe().iter_points():
        for t in times:
            try:
                v = evaluate(det, (x1, x2), t, params)
            except DomainError:
                continue
            if abs(v) < 1e-14:
                raise SingularJacobian(f"det J vanishes near ({x1:.3g}, {x2:.3g})")
            s = 1 if v > 0 else -1
            if sign == 0:
                sign = s
            elif s != sign:
                raise SingularJacobian("det J changes sign on the declared domain")
    if sign == 0:
        raise SingularJacobian("det J could not be sampled on the declared domain")
    return sign


def transform_system(hd, f: Mapping2, params=None) -> VectorField2:
    """Deterministic part of the transformed decomposition under x = f(y).

    ``hd`` must be a Cartesian HelmholtzPair; the result is the field
    -g⁻¹∇Ṽ ± (1/√det g) S∇H̃ in the new coordinates, the sign being det Q.
    """
    from .helmholtz import CARTESIAN  # local import to avoid a module cycle
    if hd.basis is not CARTESIAN:
        raise ValueError("transform_system expects a Cartesian decomposition")
    detq = _sample_detj_sign(f, params)
    vt = simplify(compose(hd.V, f))
    ht = simplify(compose(hd.H, f))
    g, detg = metric_tensor(f)
    dv1, dv2 = differentiate(vt, "x1"), differentiate(vt, "x2")
    dh1, dh2 = differentiate(ht, "x1"), differentiate(ht, "x2")
    # g⁻¹ through the adjugate; √det g as |det J|.
    J = jacobian(f)
    detj = simplify(Sub(Mul(J.e11, J.e22), Mul(J.e12, J.e21)))
    sqrt_detg = Abs(detj)
    grad_term_1 = Div(Sub(Mul(g.e22, dv1), Mul(g.e12, dv2)), detg)
    grad_term_2 = Div(Sub(Mul(g.e11, dv2), Mul(g.e12, dv1)), detg)
    sgn = Constant(float(detq))
    ham_term_1 = Mul(sgn, Div(dh2, sqrt_detg))
    ham_term_2 = Neg(Mul(sgn, Div(dh1, sqrt_detg)))
    return VectorField2(
        simplify(Neg(grad_term_1) + ham_term_1),
        simplify(Neg(grad_term_2) + ham_term_2),
    )


def pushforward(u: VectorField2, f: Mapping2) -> VectorField2:
    """Chain rule: the field of ẏ = J(y)⁻¹ u(f(y), t), symbolically."""
    J = jacobian(f)
    detj = simplify(Sub(Mul(J.e11, J.e22), Mul(J.e12, J.e21)))
    if is_zero_expr(detj):
        raise SingularJacobian("det J is identically zero")
    v1 = compose(u.u1, f)
    v2 = compose(u.u2, f)
    return VectorField2(
        simplify(Div(Sub(Mul(J.e22, v1), Mul(J.e12, v2)), detj)),
        simplify(Div(Sub(Mul(J.e11, v2), Mul(J.e21, v1)), detj)),
    )


def transform_noise(Q: Matrix2Field, probe: Grid2 | None = None, params=None,
                    tol: float = 1e-8) -> Matrix2Field:
    """Map original noise to transformed noise: Ξ̃ = QᵀΞ.

    Q is checked for orthogonality by sampling QᵀQ against the identity;
    points where Q is undefined are skipped.
    """
    probe = probe or DEFAULT_DOMAIN
    worst = 0.0
    seen = 0
    for x1, x2 in probe.iter_points():
        try:
            q = Q.evaluate((x1, x2), 0.0, params)
        except DomainError:
            continue
        seen += 1
        dev = float(np.max(np.abs(q.T @ q - np.eye(2))))
        worst = max(worst, dev)
        if worst > tol:
            raise NotOrthogonal(f"QᵀQ deviates from I by {worst:.3e} near ({x1:.3g}, {x2:.3g})")
    if seen == 0:
        raise DomainError("Q could not be sampled anywhere on the probe")
    return Q.transpose()

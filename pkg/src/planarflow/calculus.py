"""Closed-form antiderivatives for the integrand classes the package needs.

Coverage: linear combinations of monomials c(x_other) * var^k (k = -1 gives a
logarithm) and single factors sin/cos/exp of an argument linear in the
integration variable, with coefficients free of that variable.  Everything
else raises NoAntiderivative; callers fall back to quadrature.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import NoAntiderivative
from .expr import (Constant, Cos, Div, Exp, Expr, Ln, Mul, Neg, Pow, Sin,
                   Variable, free_names)
from .simplify import normalize_poly, poly_to_expr, simplify

__all__ = ["antiderivative"]


def _depends_on(atom: Expr, var: str) -> bool:
    return var in free_names(atom)


def _linear_parts(arg: Expr, var: str):
    """Split ``arg`` into a*var + b with a, b free of var; None when not linear."""
    a_poly, b_poly = {}, {}
    for mono, coef in normalize_poly(arg).items():
        var_exp = 0
        rest = []
        for key, atom, exp in mono:
            if isinstance(atom, Variable) and atom.name == var:
                var_exp = exp
            elif _depends_on(atom, var):
                return None
            else:
                rest.append((key, atom, exp))
        if var_exp == 0:
            b_poly = _merge(b_poly, tuple(rest), coef)
        elif var_exp == 1:
            a_poly = _merge(a_poly, tuple(rest), coef)
        else:
            return None
    if not a_poly:
        return None
    return poly_to_expr(a_poly), poly_to_expr(b_poly)


def _merge(poly, mono, coef):
    acc = poly.get(mono)
    acc = coef if acc is None else acc + coef
    if acc == 0:
        poly.pop(mono, None)
    else:
        poly[mono] = acc
    return poly


def _coef_expr(coef: Fraction) -> Expr:
    return poly_to_expr({(): coef})


def _integrate_monomial(mono, coef: Fraction, var: str) -> Expr:
    var_pow = 0
    free_factors = []
    special = []
    for key, atom, exp in mono:
        if isinstance(atom, Variable) and atom.name == var:
            var_pow = exp
        elif _depends_on(atom, var):
            special.append((atom, exp))
        else:
            free_factors.append((key, atom, exp))

    prefactor = poly_to_expr({tuple(free_factors): coef})

    if not special:
        if var_pow == -1:
            core = Ln(Variable(var))
        else:
            k = var_pow + 1
            core = Div(Pow(Variable(var), Constant(float(k))), Constant(float(k)))
        return Mul(prefactor, core)

    if len(special) == 1 and special[0][1] == 1 and var_pow == 0:
        atom, _ = special[0]
        if isinstance(atom, (Sin, Cos, Exp)):
            parts = _linear_parts(atom.arg, var)
            if parts is not None:
                a, _b = parts
                if isinstance(atom, Sin):
                    core = Neg(Div(Cos(atom.arg), a))
                elif isinstance(atom, Cos):
                    core = Div(Sin(atom.arg), a)
                else:
                    core = Div(Exp(atom.arg), a)
                return Mul(prefactor, core)

    raise NoAntiderivative(
        f"no closed-form antiderivative in {var} for monomial with factors "
        + ", ".join(str(a) for a, _ in special)
    )


def antiderivative(e: Expr, var: str) -> Expr:
    """Symbolic antiderivative of ``e`` with respect to ``var`` (no constant)."""
    poly = normalize_poly(e)
    if not poly:
        return Constant(0.0)
    terms = [_integrate_monomial(mono, coef, var) for mono, coef in poly.items()]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return simplify(total)

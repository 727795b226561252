"""Canonical simplification and zero-testing for expression trees.

Expressions are normalized into a polynomial ring over "atoms": variables,
parameters, and any subtree that is not itself a sum, product, quotient or
integer power (function heads, non-integer powers, sums used as denominators).
Monomials map atoms to integer exponents (negative exponents encode division)
and carry exact Fraction coefficients, so structurally different routes to the
same polynomial cancel exactly — this is what makes identities like the
telescoping series reconstructions come out as the literal zero.

Rebuilding emits a deterministic canonical tree: terms sorted by monomial key,
non-negative constants only (signs live in Neg/Sub), coefficients as plain
floats when the float is exact, otherwise as integer ratios.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple

from .errors import DomainError
from .expr import (Abs, Add, Constant, Cos, Div, Exp, Expr, Ln, Mul, Neg,
                   Parameter, Pow, Sin, Sqrt, Sub, Variable, evaluate, serialize)

__all__ = ["simplify", "is_zero_expr", "is_identically_zero", "ZeroCheck", "normalize_poly", "poly_to_expr"]

# Monomial: tuple of (sort_key, atom, exponent), sorted by sort_key.
# Poly: dict mapping monomial -> Fraction coefficient.

_MAX_EXPANSION_TERMS = 5000
_ONE_POLY_KEY = ()


def _atom_key(atom: Expr) -> str:
    return serialize(atom)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    merged = {}
    for key, atom, exp in m1 + m2:
        if key in merged:
            merged[key] = (atom, merged[key][1] + exp)
        else:
            merged[key] = (atom, exp)
    return tuple(sorted((k, a, e) for k, (a, e) in merged.items() if e != 0))


def _mono_pow(m, n: int):
    return tuple((k, a, e * n) for (k, a, e) in m)


def _poly_add(p1, p2):
    out = dict(p1)
    for mono, coef in p2.items():
        acc = out.get(mono)
        acc = coef if acc is None else acc + coef
        if acc == 0:
            out.pop(mono, None)
        else:
            out[mono] = acc
    return out


def _poly_mul(p1, p2):
    out = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            mono = _mono_mul(m1, m2)
            coef = c1 * c2
            acc = out.get(mono)
            acc = coef if acc is None else acc + coef
            if acc == 0:
                out.pop(mono, None)
            else:
                out[mono] = acc
    return out


def _poly_scale(p, c: Fraction):
    if c == 0:
        return {}
    return {m: coef * c for m, coef in p.items()}


def _poly_const(c: Fraction):
    return {} if c == 0 else {_ONE_POLY_KEY: c}


def _poly_atom(atom: Expr, exp: int = 1):
    return {((_atom_key(atom), atom, exp),): Fraction(1)}


def _sign_canonical(poly):
    """Flip the overall sign so the first monomial (in rebuild order) carries a
    positive coefficient; keeps sign-opposite denominators on one atom."""
    first = min(poly.items(), key=lambda kv: tuple((k, e) for k, _, e in kv[0]))
    if first[1] < 0:
        return {m: -c for m, c in poly.items()}, True
    return poly, False


def _atomized_pow(p, n: int):
    canon, flipped = _sign_canonical(p)
    out = _poly_atom(poly_to_expr(canon), n)
    if flipped and n % 2:
        out = _poly_scale(out, Fraction(-1))
    return out


def _poly_pow(p, n: int):
    if n == 0:
        return _poly_const(Fraction(1))
    if n < 0:
        if len(p) == 1:
            ((mono, coef),) = p.items()
            return {_mono_pow(mono, n): Fraction(1) / coef ** (-n)}
        return _atomized_pow(p, n)
    if len(p) ** n > _MAX_EXPANSION_TERMS:
        if len(p) == 1:
            ((mono, coef),) = p.items()
            return {_mono_pow(mono, n): coef ** n}
        return _atomized_pow(p, n)
    result = _poly_const(Fraction(1))
    base = p
    k = n
    while k:
        if k & 1:
            result = _poly_mul(result, base)
        base = _poly_mul(base, base) if k > 1 else base
        k >>= 1
    return result


def _fold_constant(cls, value: float):
    # Fold pure-constant function applications when the value is in-domain.
    try:
        if cls is Sin:
            return Constant(math.sin(value))
        if cls is Cos:
            return Constant(math.cos(value))
        if cls is Exp:
            return Constant(math.exp(value))
        if cls is Ln:
            return Constant(math.log(value)) if value > 0 else None
        if cls is Sqrt:
            return Constant(math.sqrt(value)) if value >= 0 else None
        if cls is Abs:
            return Constant(abs(value))
    except (OverflowError, ValueError):
        return None
    return None


def _reduce_factors(poly):
    """Canonicalize powers of cos/sqrt/abs so Pythagorean and square-root
    pairs cancel: cos^(2k+r) -> (1-sin^2)^k cos^r, sqrt(u)^(2k+r) -> u^k sqrt(u)^r,
    |u|^(2k+r) -> u^(2k) |u|^r.  Iterated to a fixpoint (expansions of nested
    arguments can reintroduce reducible factors)."""
    for _ in range(50):
        out = {}
        changed = False
        for mono, coef in poly.items():
            plain = []
            expansions = []
            for key, atom, exp in mono:
                if isinstance(atom, Cos) and exp >= 2:
                    k, r = divmod(exp, 2)
                    one_minus_sin2 = _poly_add(_poly_const(Fraction(1)),
                                               _poly_scale(_poly_atom(Sin(atom.arg), 2), Fraction(-1)))
                    expansions.append(_poly_pow(one_minus_sin2, k))
                    if r:
                        plain.append((key, atom, r))
                    changed = True
                elif isinstance(atom, Sqrt) and (exp >= 2 or exp <= -2):
                    k, r = divmod(exp, 2)
                    expansions.append(_poly_pow(normalize_poly(atom.arg), k))
                    if r:
                        plain.append((key, atom, r))
                    changed = True
                elif isinstance(atom, Abs) and (exp >= 2 or exp <= -2):
                    k, r = divmod(exp, 2)
                    expansions.append(_poly_pow(normalize_poly(atom.arg), 2 * k))
                    if r:
                        plain.append((key, atom, r))
                    changed = True
                else:
                    plain.append((key, atom, exp))
            term = {tuple(sorted(plain)): coef}
            for p in expansions:
                term = _poly_mul(term, p)
            out = _poly_add(out, term)
        poly = out
        if not changed:
            break
    return poly


def normalize_poly(e: Expr):
    """Normalize a tree into the monomial/coefficient dictionary."""
    return _reduce_factors(_normalize_raw(e))


def _normalize_raw(e: Expr):
    if isinstance(e, Constant):
        if not math.isfinite(e.value):
            return _poly_atom(e)
        return _poly_const(Fraction(e.value))
    if isinstance(e, (Variable, Parameter)):
        return _poly_atom(e)
    if isinstance(e, Add):
        return _poly_add(normalize_poly(e.left), normalize_poly(e.right))
    if isinstance(e, Sub):
        return _poly_add(normalize_poly(e.left), _poly_scale(normalize_poly(e.right), Fraction(-1)))
    if isinstance(e, Neg):
        return _poly_scale(normalize_poly(e.arg), Fraction(-1))
    if isinstance(e, Mul):
        return _poly_mul(normalize_poly(e.left), normalize_poly(e.right))
    if isinstance(e, Div):
        num = normalize_poly(e.left)
        den = normalize_poly(e.right)
        if not den:
            # Division by literal zero: keep the node so evaluation still raises.
            return _poly_atom(Div(poly_to_expr(num), Constant(0.0)))
        if len(den) == 1:
            ((mono, coef),) = den.items()
            inv = {_mono_pow(mono, -1): Fraction(1) / coef}
            return _poly_mul(num, inv)
        den, flipped = _sign_canonical(den)
        inv = _poly_atom(poly_to_expr(den), -1)
        if flipped:
            inv = _poly_scale(inv, Fraction(-1))
        return _poly_mul(num, inv)
    if isinstance(e, Pow):
        expo = normalize_poly(e.exponent)
        base = normalize_poly(e.base)
        if not expo:
            return _poly_const(Fraction(1))
        if len(expo) == 1 and _ONE_POLY_KEY in expo:
            c = expo[_ONE_POLY_KEY]
            if c.denominator == 1 and abs(c) <= 10**6:
                return _poly_pow(base, int(c))
        return _poly_atom(Pow(poly_to_expr(base), poly_to_expr(expo)))
    if isinstance(e, (Sin, Cos, Exp, Ln, Sqrt, Abs)):
        arg = poly_to_expr(normalize_poly(e.arg))
        if isinstance(arg, Constant):
            folded = _fold_constant(type(e), arg.value)
            if folded is not None:
                return normalize_poly(folded)
        return _poly_atom(type(e)(arg))
    raise TypeError(f"unknown node {type(e).__name__}")


def _sieve(limit: int):
    flags = bytearray([1]) * (limit + 1)
    flags[0:2] = b"\x00\x00"
    for p in range(2, int(limit**0.5) + 1):
        if flags[p]:
            flags[p * p::p] = bytearray(len(flags[p * p::p]))
    return tuple(i for i, f in enumerate(flags) if f)


_SPLIT_PRIMES = _sieve(10_000)


def _cofactor_split(n: int):
    """n = s * m with m <= 2**53 (an exact float) and s a 10^4-smooth
    cofactor; None when no such split exists.  Coefficients built from input
    floats times integer ratios (derivatives, factorial series) always split."""
    if n <= 2**53:
        return 1, n
    s = 1
    core = n
    for p in _SPLIT_PRIMES:
        while core % p == 0:
            core //= p
            s *= p
            if core <= 2**53:
                return s, core
    return None


def _coef_parts(coef: Fraction):
    """Exact factorization of |coef| into float-representable pieces.

    Returns (numerator factors, denominator factors) as Constant lists, both
    empty for magnitude one.  Only values irreducible to products of exact
    floats fall back to the nearest float.
    """
    mag = abs(coef)
    if mag == 1:
        return [], []
    try:
        f = float(mag)
    except OverflowError:
        f = math.inf
    if math.isfinite(f) and Fraction(f) == mag:
        return [Constant(f)], []
    ns = _cofactor_split(mag.numerator)
    ds = _cofactor_split(mag.denominator)
    if ns is not None and ds is not None and ns[0] <= 2**53 and ds[0] <= 2**53:
        s, m = ns
        t, w = ds
        nums, dens = [], []
        if s > 1:
            nums.append(Constant(float(s)))
        if t > 1:
            dens.append(Constant(float(t)))
        core = Fraction(m, w)
        fc = float(core)
        if math.isfinite(fc) and Fraction(fc) == core:
            if fc != 1.0 or not nums:
                nums.append(Constant(fc))
        else:
            if m != 1 or not nums:
                nums.append(Constant(float(m)))
            if w != 1:
                dens.append(Constant(float(w)))
        return nums, dens
    # product of folded transcendental constants: nearest float is fine
    return [Constant(f)], []


def _mono_factor(atom: Expr, exp: int) -> Expr:
    if exp == 1:
        return atom
    return Pow(atom, Constant(float(exp)))


def _term_expr(mono, coef: Fraction):
    """Build |coef| * monomial as an Expr plus the sign flag."""
    num_factors, den_factors = _coef_parts(coef)
    num_factors = list(num_factors)
    den_factors = list(den_factors)
    for _, atom, exp in mono:
        if exp > 0:
            num_factors.append(_mono_factor(atom, exp))
        else:
            den_factors.append(_mono_factor(atom, -exp))
    if not num_factors:
        num = Constant(1.0)
    else:
        num = num_factors[0]
        for f in num_factors[1:]:
            num = Mul(num, f)
    if not den_factors:
        return num, coef < 0
    den = den_factors[0]
    for f in den_factors[1:]:
        den = Mul(den, f)
    return Div(num, den), coef < 0


def poly_to_expr(poly) -> Expr:
    """Deterministic canonical tree for a normalized polynomial."""
    if not poly:
        return Constant(0.0)
    items = sorted(poly.items(), key=lambda kv: tuple((k, e) for k, _, e in kv[0]))
    result = None
    for mono, coef in items:
        term, negative = _term_expr(mono, coef)
        if result is None:
            result = Neg(term) if negative else term
        else:
            result = Sub(result, term) if negative else Add(result, term)
    return result


def simplify(e: Expr) -> Expr:
    """Constant folding, identity elimination and exact term cancellation.

    The result evaluates to the same value wherever the input is defined
    (cancellation may enlarge the domain, never shrink it).
    """
    return poly_to_expr(normalize_poly(e))


def is_zero_expr(e: Expr) -> bool:
    """True when the normal form cancels to the empty polynomial."""
    return not normalize_poly(e)


class ZeroCheck(NamedTuple):
    """Verdict of the identically-zero test; truthy when zero."""

    zero: bool
    mode: str          # "symbolic" or "numeric"
    max_abs: float     # largest |value| seen on the probe (0.0 for symbolic)

    def __bool__(self):
        return self.zero


def is_identically_zero(e: Expr, probe=None, tol: float = 1e-10,
                        params=None, times=(0.0,)) -> ZeroCheck:
    """Decide whether an expression vanishes identically.

    Tries the symbolic normal form first; falls back to evaluating on the
    probe grid (which must have at least 16x16 points and avoid the declared
    singular loci).  Probe points where evaluation leaves the domain are
    skipped; if every point is out of domain, DomainError is raised.
    """
    if is_zero_expr(e):
        return ZeroCheck(True, "symbolic", 0.0)
    if probe is None:
        raise ValueError("numeric fallback requires a probe grid")
    if probe.nx * probe.ny < 256:
        raise ValueError("probe grid must have at least 16x16 points")
    max_abs = 0.0
    defined = 0
    for x1, x2 in probe.iter_points():
        for t in times:
            try:
                v = evaluate(e, (x1, x2), t, params)
            except DomainError:
                continue
            defined += 1
            if abs(v) > max_abs:
                max_abs = abs(v)
    if defined == 0:
        raise DomainError("every probe point lies outside the expression's domain")
    return ZeroCheck(max_abs <= tol, "numeric", max_abs)

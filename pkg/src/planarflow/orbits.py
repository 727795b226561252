"""Closed-orbit exclusion for steady planar flows, and the oracle that tests it.

A positive definite matrix multiplier N(x) excludes closed orbits from any
simply connected region where the rotation

    ω = ∂U1/∂x2 - ∂U2/∂x1,     U = N u,

vanishes identically: along a closed orbit ∮ uᵀNᵀ dl = ∮ uᵀNᵀu dt would be
positive, contradicting Stokes' theorem.  Two triangular ansatz families turn
the condition ω = 0 into one linear first-order ODE each:

    upper N = ((a(x1), N12), (0, b)):   d(u2 N12)/dx2 = -a ∂u1/∂x2 + b ∂u2/∂x1,
    lower N = ((c, 0), (N21, d(x2))):   d(u1 N21)/dx1 =  c ∂u1/∂x2 - d ∂u2/∂x1,

integrated in the free variable with the other coordinate as a parameter.
Solutions blow up on the zero set of u2 (resp. u1) — the singular curves that
closed orbits must cross.

The oracle side integrates trajectories with adaptive RK4, detects recurrence
on a Poincaré section, counts transversal crossings of the singular curves,
and evaluates the loop integral that the exclusion argument relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .calculus import antiderivative
from .errors import DegenerateODE, NoAntiderivative, NoClosureWithinTmax
from .expr import (Constant, Div, Expr, Mul, Neg, Point2, Sub, Variable,
                   as_expr, bind_params, compile_fn,
                   differentiate, free_names, serialize)
from .geometry import Matrix2Field, VectorField2
from .grid import Grid2
from .simplify import is_zero_expr, normalize_poly, simplify

__all__ = [
    "AnsatzSpec", "OdeDescriptor", "NSolution", "ExclusionRegion", "ExclusionReport",
    "ClosedOrbitReport", "assemble_U", "compute_omega", "corollary_ode_rhs",
    "solve_N", "positive_definite_mask", "entrywise_positive_mask",
    "exclusion_report", "find_closed_orbits", "find_closed_orbit",
    "verify_crossings", "loop_integral", "integrate_rk4",
]

_BLOWUP_N = 1e10


@dataclass(frozen=True)
class AnsatzSpec:
    """Triangular positive definite ansatz for the multiplier N.

    ``upper`` uses (a(x1), b) with unknown N12; ``lower`` uses (c, d(x2)) with
    unknown N21.  The diagonal entries must be positive on the window; C is
    the constant of integration of the solved off-diagonal entry.
    """

    kind: str
    a: Optional[Expr] = None
    b: Optional[float] = None
    c: Optional[float] = None
    d: Optional[Expr] = None
    C: float = 0.0

    @classmethod
    def upper(cls, a, b: float, C: float = 0.0) -> "AnsatzSpec":
        if b <= 0:
            raise ValueError("b must be positive")
        return cls("upper", a=as_expr(a), b=float(b), C=float(C))

    @classmethod
    def lower(cls, c: float, d, C: float = 0.0) -> "AnsatzSpec":
        if c <= 0:
            raise ValueError("c must be positive")
        return cls("lower", c=float(c), d=as_expr(d), C=float(C))

    def matrix(self, off: Expr) -> Matrix2Field:
        zero = Constant(0.0)
        if self.kind == "upper":
            return Matrix2Field(self.a, off, zero, Constant(self.b))
        return Matrix2Field(Constant(self.c), zero, off, self.d)

    def diag_entries(self):
        if self.kind == "upper":
            return self.a, as_expr(self.b)
        return as_expr(self.c), self.d


def assemble_U(u: VectorField2, N: Matrix2Field) -> tuple:
    """U = N u, componentwise symbolic."""
    return (simplify(Mul(N.e11, u.u1) + Mul(N.e12, u.u2)),
            simplify(Mul(N.e21, u.u1) + Mul(N.e22, u.u2)))


def compute_omega(U1: Expr, U2: Expr) -> Expr:
    """Rotation scalar ω = ∂U1/∂x2 - ∂U2/∂x1 (zero-test target of the theorem)."""
    return simplify(Sub(differentiate(U1, "x2"), differentiate(U2, "x1")))


@dataclass(frozen=True)
class OdeDescriptor:
    """Normal form dN/ds = slope(s)·N + intercept(s) of the ansatz ODE.

    ``denom`` multiplies dN/ds in the raw equation (u2 for upper, u1 for
    lower); it is also the integrating factor, d(denom·N)/ds = rhs_numerator.
    ``residual`` is the raw ω-equation with the unknown left in place.
    """

    which: str          # "N12" | "N21"
    free_var: str       # integration variable
    param_var: str
    denom: Expr
    slope: Expr
    intercept: Expr
    rhs_numerator: Expr


def corollary_ode_rhs(u: VectorField2, spec: AnsatzSpec) -> OdeDescriptor:
    """Assemble the linear first-order ODE for the ansatz off-diagonal entry."""
    du1_d2 = differentiate(u.u1, "x2")
    du1_d1 = differentiate(u.u1, "x1")
    du2_d2 = differentiate(u.u2, "x2")
    du2_d1 = differentiate(u.u2, "x1")
    if spec.kind == "upper":
        denom = simplify(u.u2)
        rhs = simplify(Neg(Mul(spec.a, du1_d2)) + Mul(Constant(spec.b), du2_d1))
        slope = simplify(Div(Neg(du2_d2), denom))
        which, free, par = "N12", "x2", "x1"
    else:
        denom = simplify(u.u1)
        rhs = simplify(Mul(Constant(spec.c), du1_d2) - Mul(spec.d, du2_d1))
        slope = simplify(Div(Neg(du1_d1), denom))
        which, free, par = "N21", "x1", "x2"
    if is_zero_expr(denom):
        raise DegenerateODE(f"the coefficient of d{which}/d{free} vanishes identically")
    intercept = simplify(Div(rhs, denom))
    return OdeDescriptor(which, free, par, denom, slope, intercept, rhs)


@dataclass
class NSolution:
    """Solved off-diagonal entry: optional closed form, grid values, and the
    curves/cells where the solution does not exist."""

    which: str
    closed_form: Optional[Expr]
    grid: np.ndarray
    singular_curves: tuple
    blowup_cells: np.ndarray
    window: Grid2
    spec: AnsatzSpec


def _univariate_roots(e: Expr, var: str):
    """Real roots when e is a univariate polynomial in `var` with numeric
    coefficients; None otherwise."""
    coeffs = {}
    for mono, coef in normalize_poly(e).items():
        deg = 0
        for _, atom, exp in mono:
            if isinstance(atom, Variable) and atom.name == var and exp > 0:
                deg = exp
            else:
                return None
        coeffs[deg] = coeffs.get(deg, 0.0) + float(coef)
    if not coeffs:
        return []
    top = max(coeffs)
    if top == 0:
        return []
    arr = [coeffs.get(k, 0.0) for k in range(top, -1, -1)]
    roots = np.roots(arr)
    real = sorted({round(float(r.real), 12) for r in roots if abs(r.imag) < 1e-9})
    return real


def singular_curves_of(denom: Expr, params=None) -> tuple:
    """Implicit curves (expression = 0) where the solved entry is singular."""
    bound = simplify(bind_params(denom, params or {}))
    for var in ("x1", "x2"):
        others = free_names(bound) - {var}
        if others:
            continue
        roots = _univariate_roots(bound, var)
        if roots is not None:
            return tuple(simplify(Sub(Variable(var), Constant(r))) for r in roots)
    return (simplify(bound),)


def solve_N(u: VectorField2, spec: AnsatzSpec, window: Grid2, params=None,
            rtol: float = 1e-9) -> NSolution:
    """Solve the ansatz ODE: closed form first, then an adaptive-RK4 grid sweep.

    Grid lines run in the free variable; each line starts at the window edge
    farther from the line's singular crossings and restarts on the far side of
    every crossing (initial values from the closed form when available, else
    from the integration constant).  Cells where |N| exceeds 1e10 are flagged.
    """
    desc = corollary_ode_rhs(u, spec)
    params = params or {}

    closed = None
    try:
        anti = antiderivative(desc.rhs_numerator, desc.free_var)
        closed = simplify(Div(anti + Constant(spec.C), desc.denom))
    except NoAntiderivative:
        closed = None

    curves = singular_curves_of(desc.denom, params)

    xs, ys = window.xs(), window.ys()
    if desc.free_var == "x2":
        line_params, svals = xs, ys
    else:
        line_params, svals = ys, xs
    n_lines, n_s = len(line_params), len(svals)

    slope_fn = compile_fn(desc.slope, params, mode="math")
    inter_fn = compile_fn(desc.intercept, params, mode="math")
    denom_fn = compile_fn(desc.denom, params, mode="math")
    closed_fn = compile_fn(closed, params, mode="math") if closed is not None else None

    def fval(fn, s, p):
        x1, x2 = (p, s) if desc.free_var == "x2" else (s, p)
        return fn(x1, x2, 0.0)

    values = np.full((n_lines, n_s), np.nan)
    blowup = np.zeros((n_lines, n_s), dtype=bool)

    for li, p in enumerate(line_params):
        dvals = np.array([fval(denom_fn, s, p) for s in svals])
        near_zero = np.abs(dvals) < 1e-13
        crossing_after = [k for k in range(n_s - 1)
                          if (not near_zero[k] and not near_zero[k + 1]
                              and np.sign(dvals[k]) != np.sign(dvals[k + 1]))]
        if np.all(near_zero):
            blowup[li, :] = True
            continue

        # start from the edge farther from the first/last crossing
        sing_positions = ([svals[k] for k in crossing_after]
                          + [svals[k] for k in range(n_s) if near_zero[k]])
        if sing_positions and (min(sing_positions) - svals[0]) < (svals[-1] - max(sing_positions)):
            order = range(n_s - 1, -1, -1)
        else:
            order = range(n_s)

        def initial(k):
            if near_zero[k]:
                return None
            if closed_fn is not None:
                try:
                    v = fval(closed_fn, svals[k], p)
                except (ValueError, ZeroDivisionError, OverflowError):
                    return None
                return v if math.isfinite(v) else None
            d = dvals[k]
            return spec.C / d if d != 0 else None

        state = None
        prev_k = None
        for k in order:
            if near_zero[k]:
                blowup[li, k] = True
                state = None
                prev_k = None
                continue
            crossed = False
            if prev_k is not None:
                lo, hi = min(prev_k, k), max(prev_k, k)
                crossed = any(lo <= c < hi for c in crossing_after)
            if state is None or crossed:
                state = initial(k)
                if state is None:
                    blowup[li, k] = True
                    prev_k = k
                    continue
                values[li, k] = state
                prev_k = k
                continue
            s_from, s_to = svals[prev_k], svals[k]
            ok, state = _advance_linear_ode(slope_fn, inter_fn, desc.free_var, p,
                                            s_from, s_to, state, rtol)
            if not ok or not math.isfinite(state) or abs(state) > _BLOWUP_N:
                blowup[li, k] = True
                state = None
                prev_k = k
                continue
            values[li, k] = state
            prev_k = k

    grid = values if desc.free_var == "x2" else values.T
    blow = blowup if desc.free_var == "x2" else blowup.T
    return NSolution(desc.which, closed, grid, curves, blow, window, spec)


def _advance_linear_ode(slope_fn, inter_fn, free_var, p, s0, s1, y0, rtol):
    """Adaptive RK4 (step doubling) for dy/ds = slope·y + intercept."""

    def f(s, y):
        if free_var == "x2":
            return slope_fn(p, s, 0.0) * y + inter_fn(p, s, 0.0)
        return slope_fn(s, p, 0.0) * y + inter_fn(s, p, 0.0)

    span = s1 - s0
    h = span
    s, y = s0, y0
    direction = 1.0 if span >= 0 else -1.0
    steps = 0
    while (s1 - s) * direction > 1e-15 * abs(span):
        steps += 1
        if steps > 20000:
            return False, y
        if (s + h - s1) * direction > 0:
            h = s1 - s
        try:
            y_full = _rk4_scalar(f, s, y, h)
            y_half = _rk4_scalar(f, s + h / 2, _rk4_scalar(f, s, y, h / 2), h / 2)
        except (ValueError, OverflowError, ZeroDivisionError):
            return False, y
        if not (math.isfinite(y_full) and math.isfinite(y_half)):
            return False, y
        err = abs(y_half - y_full)
        tol = rtol * (1.0 + abs(y_half))
        if err <= tol:
            s += h
            y = y_half + (y_half - y_full) / 15.0
            if abs(y) > _BLOWUP_N:
                return False, y
            growth = (tol / err) ** 0.2 if err > 0 else 2.0
            h *= min(2.0, max(0.5, 0.9 * growth))
        else:
            h *= max(0.1, 0.9 * (tol / err) ** 0.2)
        if abs(h) < 1e-14 * max(1.0, abs(span)):
            return False, y
    return True, y


def _rk4_scalar(f, s, y, h):
    k1 = f(s, y)
    k2 = f(s + h / 2, y + h * k1 / 2)
    k3 = f(s + h / 2, y + h * k2 / 2)
    k4 = f(s + h, y + h * k3)
    return y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6


# ---------------------------------------------------------------------------
# positive definiteness and exclusion regions
# ---------------------------------------------------------------------------

def positive_definite_mask(nsol: NSolution, params=None) -> np.ndarray:
    """Symmetric-part positive definiteness of the assembled ansatz matrix.

    True where both diagonal entries are positive and the off-diagonal entry
    satisfies off² < 4·(product of the diagonal) — the quadratic-form
    criterion uᵀNᵀu > 0 used by the exclusion argument.
    """
    window, spec = nsol.window, nsol.spec
    xx, yy = window.mesh()
    d1, d2 = spec.diag_entries()
    f1 = compile_fn(d1, params)
    f2 = compile_fn(d2, params)
    with np.errstate(all="ignore"):
        a = np.broadcast_to(f1(xx, yy, 0.0), xx.shape).astype(float)
        b = np.broadcast_to(f2(xx, yy, 0.0), xx.shape).astype(float)
    off = nsol.grid
    with np.errstate(all="ignore"):
        ok = (a > 0) & (b > 0) & np.isfinite(off) & (off**2 < 4.0 * a * b)
    return ok & ~nsol.blowup_cells


def entrywise_positive_mask(nsol: NSolution, params=None) -> np.ndarray:
    """Alternative reading: all stored entries nonnegative with positive diagonal."""
    window, spec = nsol.window, nsol.spec
    xx, yy = window.mesh()
    d1, d2 = spec.diag_entries()
    f1 = compile_fn(d1, params)
    f2 = compile_fn(d2, params)
    with np.errstate(all="ignore"):
        a = np.broadcast_to(f1(xx, yy, 0.0), xx.shape).astype(float)
        b = np.broadcast_to(f2(xx, yy, 0.0), xx.shape).astype(float)
    return (a > 0) & (b > 0) & np.isfinite(nsol.grid) & (nsol.grid >= 0) & ~nsol.blowup_cells


@dataclass(frozen=True)
class ExclusionRegion:
    label: int
    cell_count: int
    bbox: tuple        # (xmin, xmax, ymin, ymax) of member cells
    mask: np.ndarray


@dataclass(frozen=True)
class ExclusionReport:
    """Connected regions certified to contain no closed orbit entirely."""

    window: Grid2
    which: str
    regions: tuple
    singular_curves: tuple
    caveats: str

    def to_json_obj(self) -> dict:
        return {
            "window": self.window.to_dict(),
            "which": self.which,
            "regions": [{"label": r.label, "cells": r.cell_count,
                         "bbox": list(r.bbox)} for r in self.regions],
            "singular_curves": [serialize(c) for c in self.singular_curves],
            "caveats": self.caveats,
        }


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def exclusion_report(u: VectorField2, spec: AnsatzSpec, window: Grid2,
                     params=None) -> ExclusionReport:
    """Solve the ansatz ODE and intersect {solution exists} with the pd mask,
    reporting 4-connected components."""
    try:
        nsol = solve_N(u, spec, window, params)
    except DegenerateODE:
        # The ODE coefficient vanishes identically.  If a constant
        # off-diagonal entry already makes ω vanish, the whole window is
        # certified with that constant matrix; otherwise the failure stands.
        n_const = spec.matrix(Constant(spec.C))
        omega = compute_omega(*assemble_U(u.map_args(lambda e: bind_params(e, params or {})),
                                          n_const.__class__(*(bind_params(e, params or {})
                                                              for e in n_const.entries()))))
        if not is_zero_expr(omega):
            raise
        grid_vals = np.full((window.nx, window.ny), spec.C, dtype=float)
        nsol = NSolution("N12" if spec.kind == "upper" else "N21", Constant(spec.C),
                         grid_vals, (), np.zeros((window.nx, window.ny), dtype=bool),
                         window, spec)
    ok = positive_definite_mask(nsol, params)
    # A region may not straddle a singular curve, even where the grid has no
    # cell exactly on it: restrict connectivity to constant-sign orthants of
    # every curve.
    orthant = np.zeros((window.nx, window.ny), dtype=np.int64)
    xx, yy = window.mesh()
    for curve in nsol.singular_curves:
        fn = compile_fn(curve, params)
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(fn(xx, yy, 0.0), xx.shape).astype(float)
        scale = float(np.nanmax(np.abs(vals))) or 1.0
        on_curve = ~np.isfinite(vals) | (np.abs(vals) <= 1e-12 * scale)
        ok &= ~on_curve
        orthant = orthant * 3 + (vals > 0).astype(np.int64)
    xs, ys = window.xs(), window.ys()
    regions = []
    lab = 0
    for code in np.unique(orthant[ok]) if ok.any() else []:
        piece = ok & (orthant == code)
        labels, count = ndimage.label(piece, structure=_FOUR_CONNECTED)
        for k in range(1, count + 1):
            mask = labels == k
            ii, jj = np.nonzero(mask)
            lab += 1
            regions.append(ExclusionRegion(
                lab, int(mask.sum()),
                (float(xs[ii.min()]), float(xs[ii.max()]),
                 float(ys[jj.min()]), float(ys[jj.max()])),
                mask))
    caveats = ("positive definiteness is the symmetric-part quadratic-form reading; "
               "regions depend on the integration constant C and the diagonal choices")
    return ExclusionReport(window, nsol.which, tuple(regions), nsol.singular_curves, caveats)


# ---------------------------------------------------------------------------
# closed-orbit oracle
# ---------------------------------------------------------------------------

@dataclass
class ClosedOrbitReport:
    """A numerically closed trajectory: polyline (first ≈ last point), the
    period estimate, and per-curve transversal crossing counts."""

    seed: Point2
    polyline: np.ndarray
    period: float
    crossings: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"seed": [self.seed.x1, self.seed.x2], "period": self.period,
                "points": len(self.polyline),
                "crossings": dict(self.crossings)}


def _rk4_vec(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + h / 2, x + (h / 2) * k1)
    k3 = f(t + h / 2, x + (h / 2) * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_rk4(f: Callable, x0, t0: float, dt: float, n_steps: int,
                  record_every: int = 1):
    """Fixed-step RK4 for ẋ = f(t, x); returns (times, states)."""
    x = np.asarray(x0, dtype=float)
    ts = [t0]
    xs = [x.copy()]
    t = t0
    for k in range(n_steps):
        x = _rk4_vec(f, t, x, dt)
        t = t0 + (k + 1) * dt
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            ts.append(t)
            xs.append(x.copy())
    return np.array(ts), np.array(xs)


class _AdaptiveRK4:
    """Step-doubling RK4 with local error control."""

    def __init__(self, f, tol=1e-9, hmax=0.05, hmin=1e-12):
        self.f = f
        self.tol = tol
        self.hmax = hmax
        self.hmin = hmin
        self.h = min(1e-3, hmax)

    def step(self, t, x):
        while True:
            h = min(self.h, self.hmax)
            full = _rk4_vec(self.f, t, x, h)
            half = _rk4_vec(self.f, t + h / 2, _rk4_vec(self.f, t, x, h / 2), h / 2)
            err = float(np.max(np.abs(full - half)))
            tol = self.tol * (1.0 + float(np.max(np.abs(half))))
            if err <= tol:
                x_new = half + (half - full) / 15.0
                growth = (tol / err) ** 0.2 if err > 0 else 2.0
                self.h = min(self.hmax, h * min(2.0, max(0.5, 0.9 * growth)))
                return t + h, x_new
            self.h = h * max(0.1, 0.9 * (tol / err) ** 0.2)
            if self.h < self.hmin:
                raise NoClosureWithinTmax("adaptive step size underflow")


def find_closed_orbit(u: VectorField2, seed: Point2, tmax: float,
                      tol: float = 1e-6, params=None, settle: float = 0.0,
                      hmax: float = 0.05, max_returns: int = 12) -> ClosedOrbitReport:
    """Trace one trajectory and close it on a Poincaré section.

    The section is the hyperplane through the anchor (the state after the
    settling time) normal to the local velocity; a return must cross in the
    same direction and land within ``tol`` of the anchor.  For limit cycles,
    set ``settle`` large enough to reach the attractor first.
    """
    fn = u.compiled(params, mode="math")

    def f(t, x):
        v1, v2 = fn(x[0], x[1], t)
        return np.array([v1, v2])

    stepper = _AdaptiveRK4(f, tol=1e-9, hmax=hmax)
    t, x = 0.0, np.array([seed.x1, seed.x2], dtype=float)
    while t < settle:
        t, x = stepper.step(t, x)

    anchor = x.copy()
    v_a = f(t, anchor)
    speed = float(np.hypot(*v_a))
    if speed < 1e-12:
        raise NoClosureWithinTmax("seed settles onto a fixed point")
    normal = v_a / speed

    t_anchor = t
    pts = [anchor.copy()]
    s_prev = 0.0
    x_prev, t_prev = anchor.copy(), t
    left_anchor = False
    returns = 0
    best = math.inf

    while t - t_anchor < tmax:
        t, x = stepper.step(t, x)
        pts.append(x.copy())
        s = float(normal @ (x - anchor))
        if not left_anchor and (float(np.linalg.norm(x - anchor)) > 10 * tol or s < 0):
            left_anchor = True
        if left_anchor and s_prev < 0.0 <= s:
            t_c, x_c = _refine_crossing(f, t_prev, x_prev, t, normal, anchor)
            v_c = f(t_c, x_c)
            if float(normal @ v_c) > 0:
                returns += 1
                dist = float(np.linalg.norm(x_c - anchor))
                if dist <= tol:
                    pts[-1] = x_c
                    poly = np.array(pts)
                    return ClosedOrbitReport(Point2(seed.x1, seed.x2), poly,
                                             t_c - t_anchor)
                best = min(best, dist)
                if returns >= max_returns:
                    raise NoClosureWithinTmax(
                        f"returns stay {dist:.2e} away from the anchor (> {tol:g})")
        s_prev, x_prev, t_prev = s, x.copy(), t
    if returns:
        raise NoClosureWithinTmax(
            f"{returns} returns within tmax, nearest {best:.2e} away (> {tol:g})")
    raise NoClosureWithinTmax(f"no recurrence within tmax = {tmax}")


def _refine_crossing(f, t0, x0, t1, normal, anchor):
    """Bisection of the section coordinate over one accepted step [t0, t1].

    Each trial re-integrates from the pre-crossing state with fixed RK4
    sub-steps, so the refined point stays on the trajectory.
    """

    def advance(tau):
        n_sub = 4
        x, t = x0.copy(), t0
        for _ in range(n_sub):
            x = _rk4_vec(f, t, x, tau / n_sub)
            t += tau / n_sub
        return t, x

    lo, hi = 0.0, t1 - t0
    t_c, x_c = advance(hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        t_c, x_c = advance(mid)
        s = float(normal @ (x_c - anchor))
        if abs(s) < 1e-14:
            break
        if s < 0.0:
            lo = mid
        else:
            hi = mid
    return t_c, x_c


def find_closed_orbits(u: VectorField2, seeds: Sequence[Point2], tmax: float,
                       tol: float = 1e-6, params=None, settle: float = 0.0,
                       hmax: float = 0.05) -> list:
    """Run the closure search for each seed; seeds that do not close are skipped."""
    reports = []
    for seed in seeds:
        try:
            reports.append(find_closed_orbit(u, seed, tmax, tol, params, settle, hmax))
        except NoClosureWithinTmax:
            continue
    return reports


def verify_crossings(orbit: ClosedOrbitReport, curves: Sequence[Expr],
                     params=None) -> dict:
    """Count transversal sign changes of each implicit curve along the orbit.

    Vertices within 1e-9 of a curve (relative to its scale on the orbit) are
    skipped so tangencies are not double counted.  The polyline is treated as
    cyclic.  Results are also stored on the report.
    """
    out = {}
    poly = orbit.polyline
    for curve in curves:
        fn = compile_fn(curve, params)
        with np.errstate(all="ignore"):
            vals = np.asarray(fn(poly[:, 0], poly[:, 1], 0.0), dtype=float)
        scale = float(np.nanmax(np.abs(vals))) or 1.0
        signs = [int(np.sign(v)) for v in vals if np.isfinite(v) and abs(v) > 1e-9 * scale]
        count = 0
        for i in range(len(signs)):
            if signs[i] != signs[i - 1]:
                count += 1
        out[serialize(curve)] = count
    orbit.crossings.update(out)
    return out


def loop_integral(orbit: ClosedOrbitReport, N, u: VectorField2, params=None) -> float:
    """Trapezoidal ∮ uᵀNᵀ dl along the orbit polyline.

    With a positive definite N the value equals ∮ uᵀNᵀu dt > 0 along true
    orbits.  ``N`` may be a Matrix2Field or a constant matrix-like.
    """
    if not isinstance(N, Matrix2Field):
        arr = np.asarray(getattr(N, "as_array", lambda: N)(), dtype=float)
        N = Matrix2Field(Constant(arr[0, 0]), Constant(arr[0, 1]),
                         Constant(arr[1, 0]), Constant(arr[1, 1]))
    poly = orbit.polyline
    u_fn = u.compiled(params)
    x1, x2 = poly[:, 0], poly[:, 1]
    v1, v2 = u_fn(x1, x2, 0.0)
    n_fns = [compile_fn(e, params) for e in N.entries()]
    with np.errstate(all="ignore"):
        n11, n12, n21, n22 = (np.broadcast_to(f(x1, x2, 0.0), x1.shape).astype(float)
                              for f in n_fns)
    w1 = n11 * v1 + n12 * v2
    w2 = n21 * v1 + n22 * v2
    dx1 = np.diff(x1)
    dx2 = np.diff(x2)
    integrand = 0.5 * (w1[:-1] + w1[1:]) * dx1 + 0.5 * (w2[:-1] + w2[1:]) * dx2
    return float(np.sum(integrand))

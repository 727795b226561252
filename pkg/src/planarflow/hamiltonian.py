"""Detection and recovery of hidden Hamiltonian structure.

A planar field F is Hamiltonian in a region exactly when some positive scalar
field α makes div(αF) vanish identically there (criterion I); for noise-driven
systems with nonsingular diffusion B the multiplier is fixed to α = 1/det B
(criterion II).  When a criterion holds, αF = S∇H̃ for a conserved H̃ that can
be recovered by line integration of the exact gradient field (-αF2, αF1).

Regions must be simply connected and free of the singular loci of α: the same
H̃ generally does not extend across curves where α or det g degenerates, so
callers name the quadrant or half-plane they work in and recovery refuses
paths that touch a singular locus.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calculus import antiderivative
from .errors import (DomainError, NoAntiderivative, PathCrossesSingularity,
                     SingularDiffusion)
from .expr import (Constant, Div, Expr, Mul, Neg, Point2, Pow, compile_fn,
                   compile_pair, differentiate, free_names,
                   serialize, substitute)
from .geometry import Matrix2Field, VectorField2
from .grid import Grid2
from .simplify import is_zero_expr, normalize_poly, poly_to_expr, simplify

__all__ = [
    "CriterionReport", "HamiltonianRecovery", "LociReport",
    "check_criterion_I", "check_criterion_II", "recover_hamiltonian",
    "singular_loci", "divergence",
]

_BLOWUP = 1e12


@dataclass(frozen=True)
class LociReport:
    """Implicit curves (expression = 0) where a multiplier degenerates.

    ``vanishing`` lists factors whose zero set sends α to 0, ``blowup`` those
    in the denominator; ``flagged_cells`` is the grid fallback for
    non-rational multipliers (None when the factor analysis succeeded).
    """

    vanishing: tuple
    blowup: tuple
    flagged_cells: Optional[np.ndarray] = None

    @property
    def curves(self) -> tuple:
        return self.vanishing + self.blowup

    def to_json_obj(self) -> dict:
        return {"vanishing": [serialize(c) for c in self.vanishing],
                "blowup": [serialize(c) for c in self.blowup],
                "flagged_cell_count": int(self.flagged_cells.sum()) if self.flagged_cells is not None else 0}


@dataclass(frozen=True)
class CriterionReport:
    verdict: str            # "Hamiltonian" | "NotHamiltonian" | "Inconclusive"
    mode: str               # "symbolic" | "numeric"
    residual: float         # max |div| sampled on the probe
    singular_loci: LociReport
    note: str = ""

    def to_json_obj(self) -> dict:
        return {"verdict": self.verdict, "mode": self.mode, "residual": self.residual,
                "singular_loci": self.singular_loci.to_json_obj(), "note": self.note}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)


@dataclass(frozen=True)
class HamiltonianRecovery:
    """Recovered Hamiltonian: closed form when integrable, grid otherwise."""

    Htilde: Optional[Expr]
    grid_values: Optional[np.ndarray]
    region: Grid2
    basepoint: Point2
    alpha: Expr
    inv_sqrt_detg: Expr
    mode: str               # "symbolic" | "numeric"
    check_residual: float


def _curve_of_atom(atom: Expr) -> Optional[Expr]:
    # Unwrap powers: the zero set of base^c is the zero set of the base.
    from .expr import Exp
    while isinstance(atom, Pow):
        atom = atom.base
    if isinstance(atom, Exp):
        return None  # exp never vanishes
    if free_names(atom) & {"x1", "x2"}:
        return atom
    return None


def singular_loci(alpha: Expr, window: Grid2 | None = None, params=None) -> LociReport:
    """Zero/blow-up sets of a multiplier.

    Multiplicative factor analysis handles rational and power-product α; the
    fallback marks window cells where |α| leaves [1e-12, 1e12].
    """
    poly = normalize_poly(alpha)
    if len(poly) == 1:
        ((mono, _),) = poly.items()
        vanish, blowup = [], []
        for _, atom, exp in mono:
            curve = _curve_of_atom(atom)
            if curve is None:
                continue
            (vanish if exp > 0 else blowup).append(simplify(curve))
        return LociReport(tuple(vanish), tuple(blowup))
    # Rational form: split off the common denominator monomial.
    denominators = None
    for mono, _ in poly.items():
        negs = {(k, a, e) for (k, a, e) in mono if e < 0}
        denominators = negs if denominators is None else denominators & negs
    vanish, blowup = [], []
    if denominators:
        for _, atom, _ in sorted(denominators):
            curve = _curve_of_atom(atom)
            if curve is not None:
                blowup.append(simplify(curve))
        denom_mono = tuple(sorted((k, a, -e) for (k, a, e) in denominators))
        numerator = poly_to_expr({_mono_mul_safe(m, denom_mono): c for m, c in poly.items()})
    else:
        numerator = poly_to_expr(poly)
    if all(e >= 0 for m in normalize_poly(numerator) for (_, _, e) in m):
        if free_names(numerator) & {"x1", "x2"}:
            vanish.append(simplify(numerator))
        return LociReport(tuple(vanish), tuple(blowup))
    # Not a polynomial/rational structure: grid fallback.
    if window is None:
        return LociReport(tuple(vanish), tuple(blowup))
    fn = compile_fn(alpha, params)
    xx, yy = window.mesh()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(fn(xx, yy, 0.0), xx.shape).astype(float)
    flagged = ~np.isfinite(vals) | (np.abs(vals) > _BLOWUP) | (np.abs(vals) < 1.0 / _BLOWUP)
    return LociReport(tuple(vanish), tuple(blowup), flagged)


def _mono_mul_safe(m1, m2):
    merged = {}
    for key, atom, exp in tuple(m1) + tuple(m2):
        if key in merged:
            merged[key] = (atom, merged[key][1] + exp)
        else:
            merged[key] = (atom, exp)
    return tuple(sorted((k, a, e) for k, (a, e) in merged.items() if e != 0))


def divergence(F: VectorField2) -> Expr:
    return simplify(differentiate(F.u1, "x1") + differentiate(F.u2, "x2"))


def check_criterion_I(F: VectorField2, alpha: Expr, probe: Grid2,
                      tol: float = 1e-10, params=None,
                      times: Sequence[float] = (0.0,)) -> CriterionReport:
    """Does div(αF) vanish identically?

    Symbolic cancellation decides first; otherwise the probe grid decides
    numerically with the tolerance scaled by the local field magnitude.
    α must be positive on the probe (verdict Inconclusive otherwise).
    """
    if probe.nx * probe.ny < 256:
        raise ValueError("probe grid must have at least 16x16 points")
    loci = singular_loci(alpha, probe, params)

    alpha_fn = compile_fn(alpha, params)
    f_fn = compile_pair(F.u1, F.u2, params)
    div = simplify(differentiate(simplify(Mul(alpha, F.u1)), "x1")
                   + differentiate(simplify(Mul(alpha, F.u2)), "x2"))
    div_fn = compile_fn(div, params)

    max_resid = 0.0
    max_scaled = 0.0
    valid = 0
    for x1, x2 in probe.iter_points():
        for t in times:
            with np.errstate(all="ignore"):
                a = float(alpha_fn(x1, x2, t))
                if not math.isfinite(a):
                    continue
                if a <= 0.0:
                    return CriterionReport("Inconclusive", "numeric", float("nan"), loci,
                                           f"alpha is not positive at ({x1:.4g}, {x2:.4g})")
                d = float(div_fn(x1, x2, t))
                v1, v2 = f_fn(x1, x2, t)
            if not (math.isfinite(d) and math.isfinite(v1) and math.isfinite(v2)):
                continue
            valid += 1
            max_resid = max(max_resid, abs(d))
            max_scaled = max(max_scaled, abs(d) / (1.0 + math.hypot(v1, v2)))
    if valid == 0:
        raise DomainError("the probe grid lies entirely in a singular locus")

    if is_zero_expr(div):
        return CriterionReport("Hamiltonian", "symbolic", max_resid, loci)
    if max_scaled <= tol:
        return CriterionReport("Hamiltonian", "numeric", max_resid, loci)
    return CriterionReport("NotHamiltonian", "numeric", max_resid, loci)


def check_criterion_II(F: VectorField2, B: Matrix2Field, probe: Grid2,
                       tol: float = 1e-10, params=None,
                       times: Sequence[float] = (0.0,)) -> CriterionReport:
    """Criterion for noise-driven systems: div(F / det B) must vanish."""
    detb = B.det_expr()
    detb_fn = compile_fn(detb, params)
    for x1, x2 in probe.iter_points():
        with np.errstate(all="ignore"):
            v = float(detb_fn(x1, x2, 0.0))
        if math.isfinite(v) and abs(v) < 1e-14:
            raise SingularDiffusion(f"|det B| < 1e-14 at ({x1:.4g}, {x2:.4g})")
    alpha = simplify(Div(Constant(1.0), detb))
    report = check_criterion_I(F, alpha, probe, tol, params, times)
    note = (report.note + "; " if report.note else "") + "criterion II with alpha = 1/det B"
    return CriterionReport(report.verdict, report.mode, report.residual,
                           report.singular_loci, note)


# ---------------------------------------------------------------------------
# recovery of the conserved Hamiltonian
# ---------------------------------------------------------------------------

def _check_path_values(fn, points, what: str):
    for x1, x2 in points:
        with np.errstate(all="ignore"):
            v = fn(x1, x2, 0.0)
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > _BLOWUP:
            raise PathCrossesSingularity(
                f"{what} degenerates near ({x1:.4g}, {x2:.4g})")


def _cumulative_newton_cotes(vals: np.ndarray, h: float, k0: int) -> np.ndarray:
    """Cumulative integral along a sampled line, anchored (= 0) at index k0.

    Composite Simpson over interval pairs; a lone trailing interval uses the
    third-order half-panel rule through the adjacent sample.
    """
    n = len(vals)
    out = np.zeros(n)
    acc = 0.0
    i = k0
    while i + 1 < n:
        if i + 2 < n:
            out[i + 1] = acc + h * (5.0 * vals[i] + 8.0 * vals[i + 1] - vals[i + 2]) / 12.0
            acc += h * (vals[i] + 4.0 * vals[i + 1] + vals[i + 2]) / 3.0
            out[i + 2] = acc
            i += 2
        else:
            if i - 1 >= 0:
                out[i + 1] = acc + h * (-vals[i - 1] + 8.0 * vals[i] + 5.0 * vals[i + 1]) / 12.0
            else:
                out[i + 1] = acc + h * (vals[i] + vals[i + 1]) / 2.0
            i += 1
    acc = 0.0
    i = k0
    while i - 1 >= 0:
        if i - 2 >= 0:
            out[i - 1] = acc - h * (5.0 * vals[i] + 8.0 * vals[i - 1] - vals[i - 2]) / 12.0
            acc -= h * (vals[i] + 4.0 * vals[i - 1] + vals[i - 2]) / 3.0
            out[i - 2] = acc
            i -= 2
        else:
            if i + 1 < n:
                out[i - 1] = acc - h * (-vals[i + 1] + 8.0 * vals[i] + 5.0 * vals[i - 1]) / 12.0
            else:
                out[i - 1] = acc - h * (vals[i] + vals[i - 1]) / 2.0
            i -= 1
    return out


def recover_hamiltonian(F: VectorField2, alpha: Expr, basepoint: Point2,
                        region: Grid2, params=None) -> HamiltonianRecovery:
    """Recover H̃ with ∇H̃ = (-αF2, αF1) by integrating along axis-aligned paths.

    Closed form when both component antiderivatives exist; otherwise a grid of
    values over the region via composite Simpson quadrature.  The basepoint
    must lie in the region and the region must avoid the singular loci of α.
    """
    g1 = simplify(Neg(Mul(alpha, F.u2)))
    g2 = simplify(Mul(alpha, F.u1))
    inv_alpha = simplify(Div(Constant(1.0), alpha))

    if not (region.xmin <= basepoint.x1 <= region.xmax
            and region.ymin <= basepoint.x2 <= region.ymax):
        raise ValueError("basepoint must lie inside the recovery region")

    g_fn = compile_pair(g1, g2, params)
    alpha_fn = compile_fn(alpha, params)
    xs, ys = region.xs(), region.ys()
    _check_path_values(alpha_fn, ((x, y) for x in xs for y in ys), "alpha")
    _check_path_values(g_fn, ((x, basepoint.x2) for x in xs), "the integrand")
    _check_path_values(g_fn, ((x, y) for x in xs[:: max(1, region.nx // 8)] for y in ys),
                       "the integrand")

    try:
        a2 = antiderivative(g2, "x2")
        g1_row = simplify(substitute(g1, {"x2": Constant(basepoint.x2)}))
        a1 = antiderivative(g1_row, "x1")
        term1 = a1 - substitute(a1, {"x1": Constant(basepoint.x1)})
        term2 = a2 - substitute(a2, {"x2": Constant(basepoint.x2)})
        h = simplify(term1 + term2)
        resid = _verify_symbolic(h, g1, g2, region, params)
        if resid > 1e-8:
            raise PathCrossesSingularity(
                f"recovered gradient mismatch {resid:.3e} > 1e-8; "
                "the region is not simply connected around the singular loci")
        return HamiltonianRecovery(h, None, region, basepoint, alpha, inv_alpha,
                                   "symbolic", resid)
    except NoAntiderivative:
        pass

    # Numeric fallback: anchor at the nearest grid node, integrate rows/columns.
    i0 = int(np.argmin(np.abs(xs - basepoint.x1)))
    j0 = int(np.argmin(np.abs(ys - basepoint.x2)))
    xx, yy = region.mesh()
    with np.errstate(all="ignore"):
        v1, v2 = g_fn(xx, yy, 0.0)
    v1 = np.broadcast_to(v1, xx.shape).astype(float)
    v2 = np.broadcast_to(v2, xx.shape).astype(float)
    if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
        raise PathCrossesSingularity("integrand is undefined inside the region")

    row = _cumulative_newton_cotes(v1[:, j0], region.hx, i0)
    h_grid = np.empty((region.nx, region.ny))
    for i in range(region.nx):
        h_grid[i] = row[i] + _cumulative_newton_cotes(v2[i], region.hy, j0)

    # Path independence is the numeric soundness check (rows-then-columns
    # versus columns-then-rows).
    col = _cumulative_newton_cotes(v2[i0], region.hy, j0)
    h_alt = np.empty_like(h_grid)
    for j in range(region.ny):
        h_alt[:, j] = col[j] + _cumulative_newton_cotes(v1[:, j], region.hx, i0)
    scale = 1.0 + float(np.max(np.abs(h_grid)))
    resid = float(np.max(np.abs(h_grid - h_alt))) / scale
    if resid > 1e-5:
        raise PathCrossesSingularity(
            f"path-dependent integral (max discrepancy {resid:.3e}); "
            "alpha*F is not an exact gradient on this region")
    return HamiltonianRecovery(None, h_grid, region, basepoint, alpha, inv_alpha,
                               "numeric", resid)


def _verify_symbolic(h: Expr, g1: Expr, g2: Expr, region: Grid2, params) -> float:
    r1 = simplify(differentiate(h, "x1") - g1)
    r2 = simplify(differentiate(h, "x2") - g2)
    if is_zero_expr(r1) and is_zero_expr(r2):
        return 0.0
    fn = compile_pair(r1, r2, params)
    xx, yy = region.mesh()
    with np.errstate(all="ignore"):
        v1, v2 = fn(xx, yy, 0.0)
    worst = max(float(np.nanmax(np.abs(np.broadcast_to(v1, xx.shape)))),
                float(np.nanmax(np.abs(np.broadcast_to(v2, xx.shape)))))
    return worst

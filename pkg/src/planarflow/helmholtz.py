"""Helmholtz decompositions of planar fields: u = -∇V + S∇H.

Closed forms are provided for two system classes.  For the damped-driven
oscillator family written as (x2, -p(x1) - q(x1) x2) with polynomial q of
degree M, the potential and Hamiltonian are truncating series

    V = Σ_n q^(2n)(x1) (-1)^n x2^(2n+2) / (2n+2)!,
    H = x2²/2 + ∫p dx1 + Σ_n q^(2n+1)(x1) (-1)^n x2^(2n+3) / (2n+3)!,

whose reconstruction telescopes back to the field exactly.  For rotationally
symmetric modal dynamics (Γ(ρ)ρ, Ω(ρ)) in amplitude-phase coordinates with
metric diag(1, ρ²), the pair is Ṽ = -∫Γρ dρ, H̃ = -∫Ωρ dρ.

Gridded fields are decomposed numerically through two discrete Poisson solves
(5-point stencils): a Neumann problem for V with boundary data ∂V/∂n = -u·n
(compatibility enforced by mean subtraction) and a homogeneous-Dirichlet
problem for H.  With these conventions the pair (V, H) is a gauge choice; the
contract is that the discrete -∇V + S∇H reproduces u up to the declared
residual, not that V and H match any particular analytic gauge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .calculus import antiderivative
from .errors import SolverDiverged
from .expr import (Constant, Div, Expr, Mul, Neg, Pow, Sub, X1, X2,
                   as_expr, differentiate, free_names)
from .geometry import Matrix2Field, VectorField2
from .grid import Grid2
from .simplify import is_zero_expr, normalize_poly, poly_to_expr, simplify

__all__ = [
    "CARTESIAN", "Curvilinear", "HelmholtzPair", "LienardSpec", "ModalSpec",
    "GridField", "reconstruct", "lienard_decompose", "modal_decompose",
    "numeric_decompose", "grid_reconstruct",
]


class _Cartesian:
    """Sentinel basis for decompositions written in rectangular coordinates."""

    def __repr__(self):
        return "Cartesian"


CARTESIAN = _Cartesian()


@dataclass(frozen=True)
class Curvilinear:
    """Curvilinear basis tag: metric g, orientation det Q, and the positive
    square root of det g on the declared domain (defaults to sqrt(det g))."""

    g: Matrix2Field
    detQ: int = 1
    sqrt_detg: Optional[Expr] = None

    def sqrt_det(self) -> Expr:
        if self.sqrt_detg is not None:
            return self.sqrt_detg
        from .expr import Sqrt
        return Sqrt(self.g.det_expr())


Basis = Union[_Cartesian, Curvilinear]


@dataclass(frozen=True)
class HelmholtzPair:
    """Scalar potential and Hamiltonian generating a field; defined up to
    additive constants (adding a constant to V or H leaves the field alone)."""

    V: Expr
    H: Expr
    basis: Basis = CARTESIAN


def reconstruct(hd: HelmholtzPair) -> VectorField2:
    """The field generated by (V, H): -∇V + S∇H in Cartesian coordinates,
    -g⁻¹∇V ± (1/√det g) S∇H in a curvilinear basis."""
    dv1 = differentiate(hd.V, "x1")
    dv2 = differentiate(hd.V, "x2")
    dh1 = differentiate(hd.H, "x1")
    dh2 = differentiate(hd.H, "x2")
    if hd.basis is CARTESIAN:
        return VectorField2(simplify(Neg(dv1) + dh2), simplify(Neg(dv2) - dh1))
    basis = hd.basis
    g = basis.g
    detg = g.det_expr()
    root = basis.sqrt_det()
    sgn = Constant(float(basis.detQ))
    grad1 = Div(Sub(Mul(g.e22, dv1), Mul(g.e12, dv2)), detg)
    grad2 = Div(Sub(Mul(g.e11, dv2), Mul(g.e12, dv1)), detg)
    return VectorField2(
        simplify(Neg(grad1) + Mul(sgn, Div(dh2, root))),
        simplify(Neg(grad2) - Mul(sgn, Div(dh1, root))),
    )


# ---------------------------------------------------------------------------
# closed-form decompositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LienardSpec:
    """Oscillator ẋ = (x2, -p(x1) - q(x1)x2).

    ``p`` is an expression in x1 whose antiderivative exists in closed form
    (polynomial/sin/cos/exp terms); an x1-free part of p acts as forcing and
    is routed by the gauge flag of :func:`lienard_decompose`.  ``q`` is the
    coefficient list (q_0 .. q_M) of a degree-M polynomial; entries may be
    numbers or x-free expressions (parameters).
    """

    p: Expr
    q: tuple

    def __init__(self, p, q: Sequence = ()):
        object.__setattr__(self, "p", as_expr(p))
        object.__setattr__(self, "q", tuple(as_expr(c) for c in q))
        bad = free_names(self.p) & {"x2"}
        if bad:
            raise ValueError("p must not depend on x2")
        for c in self.q:
            if free_names(c) & {"x1", "x2"}:
                raise ValueError("q coefficients must be free of x1, x2")

    def q_expr(self) -> Expr:
        total = Constant(0.0)
        for m, c in enumerate(self.q):
            total = total + Mul(c, Pow(X1, Constant(float(m))))
        return simplify(total)

    def field(self) -> VectorField2:
        return VectorField2(X2, simplify(Neg(self.p) - Mul(self.q_expr(), X2)))


def _split_forcing(p: Expr):
    """Split p into (x1-dependent part, x1-free part)."""
    with_x1, without = {}, {}
    for mono, coef in normalize_poly(p).items():
        target = with_x1 if any("x1" in free_names(atom) for _, atom, _ in mono) else without
        target[mono] = coef
    return poly_to_expr(with_x1), poly_to_expr(without)


def lienard_decompose(spec: LienardSpec, forcing_in_potential: bool = True) -> HelmholtzPair:
    """Closed-form Cartesian decomposition of a Liénard-type oscillator.

    The series truncate because q has finite degree.  The decomposition is
    quasi-unique: an x1-free forcing term c in p contributes -c·x2 to V by
    default, or -c·x1 to H with ``forcing_in_potential=False``.
    """
    p_rest, forcing = _split_forcing(spec.p)
    p_anti = antiderivative(p_rest, "x1")

    v_terms = []
    h_terms = [Div(Pow(X2, Constant(2.0)), Constant(2.0)), p_anti]
    if not is_zero_expr(forcing):
        if forcing_in_potential:
            v_terms.append(Mul(forcing, X2))
        else:
            h_terms.append(Mul(forcing, X1))

    # Even derivative orders of q feed V, odd ones feed H; in both series the
    # k-th derivative carries x2^(k+2)/(k+2)! and the sign flips every two
    # orders.  Simplifying each derivative keeps the chain compact; the
    # canonical rebuild emits coefficients as exact float ratios, so the
    # telescoping cancellation in the reconstruction identity stays exact.
    deriv = spec.q_expr()
    order = 0
    while not is_zero_expr(deriv):
        k = order + 2
        term = Mul(deriv, Div(Pow(X2, Constant(float(k))), Constant(float(math.factorial(k)))))
        if (order // 2) % 2 == 1:
            term = Neg(term)
        (v_terms if order % 2 == 0 else h_terms).append(term)
        deriv = simplify(differentiate(deriv, "x1"))
        order += 1

    v = Constant(0.0)
    for term in v_terms:
        v = v + term
    h = Constant(0.0)
    for term in h_terms:
        h = h + term
    return HelmholtzPair(simplify(v), simplify(h), CARTESIAN)


@dataclass(frozen=True)
class ModalSpec:
    """Amplitude-phase dynamics (Γ(ρ)ρ, Ω(ρ)) with ρ written as x1.

    Γ and Ω must be polynomial in ρ so the antiderivatives of Γρ and Ωρ exist
    in closed form.
    """

    damping: Expr
    frequency: Expr

    def __init__(self, damping, frequency):
        object.__setattr__(self, "damping", as_expr(damping))
        object.__setattr__(self, "frequency", as_expr(frequency))
        for e in (self.damping, self.frequency):
            if "x2" in free_names(e) or "t" in free_names(e):
                raise ValueError("modal coefficients depend on the amplitude only")

    def field(self) -> VectorField2:
        return VectorField2(simplify(Mul(self.damping, X1)), simplify(self.frequency))


def modal_decompose(spec: ModalSpec) -> HelmholtzPair:
    """Curvilinear decomposition Ṽ = -∫Γρ dρ, H̃ = -∫Ωρ dρ with g = diag(1, ρ²)."""
    vt = simplify(Neg(antiderivative(Mul(spec.damping, X1), "x1")))
    ht = simplify(Neg(antiderivative(Mul(spec.frequency, X1), "x1")))
    basis = Curvilinear(
        g=Matrix2Field.diagonal(Constant(1.0), Pow(X1, Constant(2.0))),
        detQ=1,
        sqrt_detg=X1,
    )
    return HelmholtzPair(vt, ht, basis)


# ---------------------------------------------------------------------------
# gridded fields and the numeric decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridField:
    """Samples of a planar field on a rectangular grid (arrays are (nx, ny))."""

    grid: Grid2
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        shape = (self.grid.nx, self.grid.ny)
        if u1.shape != shape or u2.shape != shape:
            raise ValueError(f"sample arrays must have shape {shape}")
        if self.grid.nx < 8 or self.grid.ny < 8:
            raise ValueError("GridField needs at least 8 points per axis")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise ValueError("field samples must be finite")

    @classmethod
    def sample(cls, field: VectorField2, grid: Grid2, t: float = 0.0, params=None) -> "GridField":
        f = field.compiled(params)
        xx, yy = grid.mesh()
        v1, v2 = f(xx, yy, t)
        return cls(grid, np.broadcast_to(v1, xx.shape).astype(float),
                   np.broadcast_to(v2, xx.shape).astype(float))

    def to_csv(self, path) -> None:
        xs, ys = self.grid.xs(), self.grid.ys()
        with open(path, "w", newline="") as fh:
            fh.write("x1,x2,u1,u2\n")
            for i in range(self.grid.nx):
                for j in range(self.grid.ny):
                    fh.write(f"{float(xs[i])!r},{float(ys[j])!r},"
                             f"{float(self.u1[i, j])!r},{float(self.u2[i, j])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "GridField":
        rows = []
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "x1,x2,u1,u2":
                raise ValueError(f"unexpected CSV header {header!r}")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) == 4:
                    rows.append([float(v) for v in parts])
        data = np.array(rows)
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        grid = Grid2(xs[0], xs[-1], ys[0], ys[-1], len(xs), len(ys))
        u1 = data[:, 2].reshape(len(xs), len(ys))
        u2 = data[:, 3].reshape(len(xs), len(ys))
        return cls(grid, u1, u2)

    def to_json_obj(self) -> dict:
        return {"grid": self.grid.to_dict(),
                "u1": self.u1.ravel().tolist(),
                "u2": self.u2.ravel().tolist()}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_obj(), fh, sort_keys=True)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GridField":
        grid = Grid2.from_dict(obj["grid"])
        shape = (grid.nx, grid.ny)
        return cls(grid, np.array(obj["u1"]).reshape(shape), np.array(obj["u2"]).reshape(shape))

    @classmethod
    def from_json(cls, path) -> "GridField":
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))


def _divergence(u: GridField) -> np.ndarray:
    g = u.grid
    return np.gradient(u.u1, g.hx, axis=0) + np.gradient(u.u2, g.hy, axis=1)


def _curl(u: GridField) -> np.ndarray:
    g = u.grid
    return np.gradient(u.u2, g.hx, axis=0) - np.gradient(u.u1, g.hy, axis=1)


def _solve_neumann(grid: Grid2, f: np.ndarray, gw, ge, gs, gn, rtol: float) -> np.ndarray:
    """Finite-volume Poisson solve ΔV = f with ∂V/∂n = data, mean-zero result.

    The assembly is symmetric with kernel = constants; the RHS is projected
    onto the compatible range before a pinned direct solve.
    """
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    n = nx * ny

    def idx(i, j):
        return i * ny + j

    wx = np.full(nx, hx)
    wx[0] = wx[-1] = hx / 2.0
    wy = np.full(ny, hy)
    wy[0] = wy[-1] = hy / 2.0

    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for i in range(nx):
        for j in range(ny):
            p = idx(i, j)
            diag = 0.0
            b[p] = f[i, j] * wx[i] * wy[j]
            if i + 1 < nx:
                c = wy[j] / hx
                rows.append(p); cols.append(idx(i + 1, j)); vals.append(c)
                diag -= c
            else:
                b[p] -= ge[j] * wy[j]
            if i > 0:
                c = wy[j] / hx
                rows.append(p); cols.append(idx(i - 1, j)); vals.append(c)
                diag -= c
            else:
                b[p] -= gw[j] * wy[j]
            if j + 1 < ny:
                c = wx[i] / hy
                rows.append(p); cols.append(idx(i, j + 1)); vals.append(c)
                diag -= c
            else:
                b[p] -= gn[i] * wx[i]
            if j > 0:
                c = wx[i] / hy
                rows.append(p); cols.append(idx(i, j - 1)); vals.append(c)
                diag -= c
            else:
                b[p] -= gs[i] * wx[i]
            rows.append(p); cols.append(p); vals.append(diag)

    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    b = b - b.mean()  # compatibility projection onto range(A)

    pinned = a.tolil()
    pinned[0, :] = 0.0
    pinned[0, 0] = 1.0
    rhs = b.copy()
    rhs[0] = 0.0
    v = spla.spsolve(pinned.tocsr(), rhs)

    scale = max(float(np.linalg.norm(b)), 1e-300)
    residual = float(np.linalg.norm(a @ v - b)) / scale
    if residual > rtol:
        raise SolverDiverged(f"Neumann solve residual {residual:.3e} > {rtol:.1e}")
    return (v - v.mean()).reshape(nx, ny)


def _solve_dirichlet(grid: Grid2, f: np.ndarray, rtol: float) -> np.ndarray:
    """5-point Poisson solve ΔH = f with H = 0 on the boundary."""
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    mx, my = nx - 2, ny - 2
    n = mx * my

    def idx(i, j):
        return (i - 1) * my + (j - 1)

    rows, cols, vals = [], [], []
    b = np.zeros(n)
    cx, cy = 1.0 / hx**2, 1.0 / hy**2
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            p = idx(i, j)
            b[p] = f[i, j]
            rows.append(p); cols.append(p); vals.append(-2.0 * cx - 2.0 * cy)
            for (ii, jj, c) in ((i + 1, j, cx), (i - 1, j, cx), (i, j + 1, cy), (i, j - 1, cy)):
                if 1 <= ii <= nx - 2 and 1 <= jj <= ny - 2:
                    rows.append(p); cols.append(idx(ii, jj)); vals.append(c)
                # boundary values are zero: nothing moves to the RHS

    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    h_int = spla.spsolve(a, b)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    residual = float(np.linalg.norm(a @ h_int - b)) / scale
    if residual > rtol:
        raise SolverDiverged(f"Dirichlet solve residual {residual:.3e} > {rtol:.1e}")
    h = np.zeros((nx, ny))
    h[1:-1, 1:-1] = h_int.reshape(mx, my)
    return h


def numeric_decompose(u: GridField, rtol: float = 1e-8):
    """Decompose a gridded field into potential grids (V, H).

    Solves ΔV = -div u with Neumann data ∂V/∂n = -u·n and ΔH = -curl u with
    homogeneous Dirichlet data, where curl u = ∂u2/∂x1 - ∂u1/∂x2.  Returns
    (Vgrid, Hgrid); V is mean-zero.
    """
    grid = u.grid
    f_v = -_divergence(u)
    # Outward-normal data ∂V/∂n = -u·n on the four edges.
    gw = u.u1[0, :]          # west: n = (-1, 0), -u·n = u1
    ge = -u.u1[-1, :]        # east: n = (+1, 0)
    gs = u.u2[:, 0]          # south: n = (0, -1)
    gn = -u.u2[:, -1]        # north: n = (0, +1)
    v = _solve_neumann(grid, f_v, gw, ge, gs, gn, rtol)
    h = _solve_dirichlet(grid, -_curl(u), rtol)
    return v, h


def grid_reconstruct(v: np.ndarray, h: np.ndarray, grid: Grid2):
    """Discrete -∇V + S∇H from potential grids (central differences)."""
    dv1 = np.gradient(v, grid.hx, axis=0)
    dv2 = np.gradient(v, grid.hy, axis=1)
    dh1 = np.gradient(h, grid.hx, axis=0)
    dh2 = np.gradient(h, grid.hy, axis=1)
    return -dv1 + dh2, -dv2 - dh1

"""Stochastic simulation of planar Langevin systems ẋ = F(x,t) + B(x)Ξ.

Ξ carries independent white Gaussian components of variance Γ, so each Euler
step receives increments dW ~ N(0, Γ·dt).  Two schemes are provided: plain
Euler-Maruyama, and the Heun predictor-corrector that evaluates both drift and
diffusion at the midpoint average — the Stratonovich-consistent choice, which
is the right one for multiplicative noise obtained from a change of variables
of an additive-noise system.  With Γ = 0 both reduce to their deterministic
counterparts.

Ensemble members evolve on independent counter-based random streams keyed by
(seed, member index), so results are reproducible bit-exactly and independent
of any batching of the members.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .expr import Point2, compile_fn
from .geometry import Mapping2, Matrix2Field, VectorField2

__all__ = ["LangevinSpec", "Ensemble", "StatsReport", "simulate",
           "map_ensemble", "compare_stats", "member_noise"]

_BLOWUP = 1e8
_BLOCK = 4096
_MAGIC = b"PFL1"


@dataclass(frozen=True)
class LangevinSpec:
    """Complete description of one stochastic simulation run."""

    F: VectorField2
    B: Matrix2Field
    gamma: float                  # white-noise variance, >= 0
    dt: float
    T: float
    ensemble_size: int = 1
    seed: int = 0
    scheme: str = "heun"          # "euler_maruyama" | "heun"
    params: Optional[dict] = None
    save_every: int = 1           # store every k-th step (0 and T always kept)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not (0 < self.dt <= self.T):
            raise ValueError("need 0 < dt <= T")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be at least 1")
        if self.scheme not in ("euler_maruyama", "heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def dt_effective(self) -> float:
        # uniform step adjusted so the run lands on T exactly
        return self.T / self.n_steps


@dataclass
class Ensemble:
    """Sample paths at the stored times; states has shape (members, times, 2)."""

    times: np.ndarray
    states: np.ndarray
    spec: LangevinSpec
    blown: np.ndarray             # members flagged by the |x| > 1e8 guard

    def at_time(self, t: float) -> np.ndarray:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if len(idx) == 0:
            raise KeyError(f"t = {t} is not a stored sample time")
        return self.states[:, idx[0], :]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,member,x1,x2\n")
            for m in range(self.states.shape[0]):
                for k, t in enumerate(self.times):
                    fh.write(f"{float(t)!r},{m},{float(self.states[m, k, 0])!r},{float(self.states[m, k, 1])!r}\n")

    def to_binary(self, path) -> None:
        """Compact layout: magic 'PFL1', two little-endian uint64 counts
        (members, times), the times as float64, then the states row-major
        (member, time, component) as float64, then one blow-up flag byte per
        member."""
        m, nt, _ = self.states.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQ", m, nt))
            fh.write(self.times.astype("<f8").tobytes())
            fh.write(self.states.astype("<f8").tobytes())
            fh.write(self.blown.astype(np.uint8).tobytes())

    @classmethod
    def from_binary(cls, path, spec: Optional[LangevinSpec] = None) -> "Ensemble":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ValueError(f"bad magic {magic!r}")
            m, nt = struct.unpack("<QQ", fh.read(16))
            times = np.frombuffer(fh.read(8 * nt), dtype="<f8").copy()
            states = np.frombuffer(fh.read(8 * m * nt * 2), dtype="<f8").reshape(m, nt, 2).copy()
            blown = np.frombuffer(fh.read(m), dtype=np.uint8).astype(bool).copy()
        return cls(times, states, spec, blown)


def member_noise(seed: int, member: int, n_steps: int, gamma: float, dt: float) -> np.ndarray:
    """The (n_steps, 2) Gaussian increments of one member's stream."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, member], dtype=np.uint64)))
    return rng.standard_normal((n_steps, 2)) * np.sqrt(gamma * dt)


def simulate(spec: LangevinSpec, x0: Point2) -> Ensemble:
    """Integrate the ensemble from a common start point.

    Members whose state norm exceeds 1e8 are flagged and frozen rather than
    aborting the run.
    """
    params = spec.params or {}
    f_fn = spec.F.compiled(params)
    b_fns = [compile_fn(e, params) for e in spec.B.entries()]
    n_steps = spec.n_steps
    dt = spec.dt_effective
    width = max(1, int(spec.save_every))
    save_idx = sorted({0, n_steps, *range(0, n_steps + 1, width)})
    times = np.array([k * dt for k in save_idx])

    m_total = spec.ensemble_size
    states = np.empty((m_total, len(save_idx), 2))
    blown_all = np.zeros(m_total, dtype=bool)

    for start in range(0, m_total, _BLOCK):
        stop = min(start + _BLOCK, m_total)
        mb = stop - start
        if spec.gamma > 0:
            noise = np.empty((mb, n_steps, 2))
            for m in range(mb):
                noise[m] = member_noise(spec.seed, start + m, n_steps, spec.gamma, dt)
        else:
            noise = None
        x = np.full((mb, 2), [x0.x1, x0.x2], dtype=float)
        blown = np.zeros(mb, dtype=bool)
        save_pos = {k: i for i, k in enumerate(save_idx)}
        if 0 in save_pos:
            states[start:stop, save_pos[0], :] = x
        for k in range(n_steps):
            t = k * dt
            dw = noise[:, k, :] if noise is not None else None
            x_new = _step(spec.scheme, f_fn, b_fns, x, t, dt, dw)
            with np.errstate(all="ignore"):
                bad = ~np.all(np.isfinite(x_new), axis=1) | (
                    np.max(np.abs(x_new), axis=1) > _BLOWUP)
            newly = bad & ~blown
            if np.any(newly):
                blown |= newly
            x = np.where(blown[:, None], x, x_new)
            if k + 1 in save_pos:
                states[start:stop, save_pos[k + 1], :] = x
        blown_all[start:stop] = blown

    return Ensemble(times, states, spec, blown_all)


def _b_apply(b_fns, x1, x2, t, w1, w2):
    b11, b12, b21, b22 = (fn(x1, x2, t) for fn in b_fns)
    return b11 * w1 + b12 * w2, b21 * w1 + b22 * w2


def _step(scheme, f_fn, b_fns, x, t, dt, dw):
    x1, x2 = x[:, 0], x[:, 1]
    f1, f2 = f_fn(x1, x2, t)
    if dw is None:
        g1 = np.zeros_like(x1)
        g2 = np.zeros_like(x2)
    else:
        g1, g2 = _b_apply(b_fns, x1, x2, t, dw[:, 0], dw[:, 1])
    p1 = x1 + f1 * dt + g1
    p2 = x2 + f2 * dt + g2
    if scheme == "euler_maruyama":
        return np.stack([p1, p2], axis=1)
    with np.errstate(all="ignore"):
        f1p, f2p = f_fn(p1, p2, t + dt)
        if dw is None:
            h1 = g1
            h2 = g2
        else:
            h1, h2 = _b_apply(b_fns, p1, p2, t + dt, dw[:, 0], dw[:, 1])
        y1 = x1 + 0.5 * (f1 + f1p) * dt + 0.5 * (g1 + h1)
        y2 = x2 + 0.5 * (f2 + f2p) * dt + 0.5 * (g2 + h2)
    return np.stack([y1, y2], axis=1)


def map_ensemble(e: Ensemble, f: Mapping2, direction: str = "forward") -> Ensemble:
    """Apply the mapping (or its inverse) pathwise at every stored time.

    Points that leave the mapping's domain flag the member instead of failing
    the whole ensemble.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    params = (e.spec.params if e.spec else None) or {}
    y1 = e.states[:, :, 0]
    y2 = e.states[:, :, 1]
    with np.errstate(all="ignore"):
        if direction == "forward":
            g1 = compile_fn(f.f1, params)
            g2 = compile_fn(f.f2, params)
            z1 = g1(y1, y2, 0.0)
            z2 = g2(y1, y2, 0.0)
        else:
            if f.inverse is None:
                raise DomainError("mapping has no declared inverse")
            if callable(f.inverse):
                z1, z2 = f.inverse(y1, y2)
            else:
                g1 = compile_fn(f.inverse[0], params)
                g2 = compile_fn(f.inverse[1], params)
                z1 = g1(y1, y2, 0.0)
                z2 = g2(y1, y2, 0.0)
    z1 = np.broadcast_to(z1, y1.shape).astype(float)
    z2 = np.broadcast_to(z2, y2.shape).astype(float)
    blown = e.blown | ~np.all(np.isfinite(z1) & np.isfinite(z2), axis=1)
    return Ensemble(e.times.copy(), np.stack([z1, z2], axis=2), e.spec, blown)


@dataclass(frozen=True)
class StatsReport:
    """Two-ensemble moment comparison at one sample time."""

    t: float
    n1: int
    n2: int
    mean1: np.ndarray
    mean2: np.ndarray
    cov1: np.ndarray
    cov2: np.ndarray
    z_mean: np.ndarray            # (2,)
    z_cov: np.ndarray             # (2, 2)

    @property
    def max_abs_z(self) -> float:
        return float(max(np.max(np.abs(self.z_mean)), np.max(np.abs(self.z_cov))))

    def to_json_obj(self) -> dict:
        return {"t": self.t, "n1": self.n1, "n2": self.n2,
                "mean1": self.mean1.tolist(), "mean2": self.mean2.tolist(),
                "cov1": self.cov1.tolist(), "cov2": self.cov2.tolist(),
                "z_mean": self.z_mean.tolist(), "z_cov": self.z_cov.tolist(),
                "max_abs_z": self.max_abs_z}


def compare_stats(e1: Ensemble, e2: Ensemble, t: float) -> StatsReport:
    """Componentwise means and covariances with z-scores of the differences
    under the two-sample normal approximation."""
    a = e1.at_time(t)[~e1.blown]
    b = e2.at_time(t)[~e2.blown]
    n1, n2 = len(a), len(b)
    m1, m2 = a.mean(axis=0), b.mean(axis=0)
    c1 = np.cov(a, rowvar=False)
    c2 = np.cov(b, rowvar=False)
    z_mean = (m1 - m2) / np.sqrt(np.diag(c1) / n1 + np.diag(c2) / n2)

    def cov_se(c, n):
        # asymptotic variance of the sample covariance entries
        return np.sqrt((np.outer(np.diag(c), np.diag(c)) + c**2) / (n - 1))

    z_cov = (c1 - c2) / np.sqrt(cov_se(c1, n1)**2 + cov_se(c2, n2)**2)
    return StatsReport(t, n1, n2, m1, m2, c1, c2, z_mean, z_cov)

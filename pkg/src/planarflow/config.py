"""Run configuration: the SystemConfig record and its TOML file loader.

A config names a planar system (field expressions plus parameter values), the
window to work on, and optional blocks for the criterion multiplier, a
coordinate mapping, ansatz matrices, closed-form decomposition inputs, orbit
seeds and simulation settings.  The same record backs both the built-in
example catalog and user-supplied files.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigError, PlanarflowError
from .expr import Expr, Point2
from .geometry import Mapping2, Matrix2Field, VectorField2
from .grid import Grid2
from .helmholtz import HelmholtzPair, LienardSpec, ModalSpec
from .orbits import AnsatzSpec
from .parser import parse

__all__ = ["SystemConfig", "load_config", "polar_inverse"]


def polar_inverse(x1, x2):
    """Inverse of the amplitude-phase mapping (excludes the origin fiber)."""
    return np.hypot(x1, x2), np.arctan2(x2, x1)


@dataclass(frozen=True)
class SystemConfig:
    """Everything a CLI run needs to know about one system."""

    name: str
    params: dict
    field: VectorField2
    window: Grid2
    alpha: Optional[Expr] = None
    noise_B: Optional[Matrix2Field] = None
    mapping: Optional[Mapping2] = None
    ansatz_upper: Optional[AnsatzSpec] = None
    ansatz_lower: Optional[AnsatzSpec] = None
    hd: Optional[HelmholtzPair] = None
    lienard: Optional[LienardSpec] = None
    modal: Optional[ModalSpec] = None
    reference_h: Optional[Expr] = None      # known conserved quantity, if any
    basepoint: Optional[Point2] = None
    region: Optional[Grid2] = None
    orbit_seeds: tuple = ()
    settle: float = 0.0
    tmax: float = 40.0
    orbit_tol: float = 1e-6
    steady_params: dict = field(default_factory=dict)
    gamma: float = 0.05
    dt: float = 1e-3
    T: float = 1.0
    ensemble_size: int = 1000
    seed: int = 0
    scheme: str = "heun"
    decompose_method: Optional[str] = None  # "fixture" | "lienard" | "modal" | "numeric"

    def bound_params(self) -> dict:
        return dict(self.params)

    def orbit_params(self) -> dict:
        out = dict(self.params)
        out.update(self.steady_params)
        return out

    def with_overrides(self, seed=None, grid=None) -> "SystemConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if grid is not None:
            nx, ny = grid
            cfg = replace(cfg, window=Grid2(cfg.window.xmin, cfg.window.xmax,
                                            cfg.window.ymin, cfg.window.ymax, nx, ny))
        return cfg


def _parse_expr(text, param_names, what):
    try:
        return parse(text, param_names)
    except PlanarflowError as exc:
        raise ConfigError(f"bad expression for {what}: {exc}") from exc


def _window_from(d: dict) -> Grid2:
    try:
        return Grid2(float(d["xmin"]), float(d["xmax"]), float(d["ymin"]), float(d["ymax"]),
                     int(d.get("nx", 64)), int(d.get("ny", 64)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad window block: {exc}") from exc


def load_config(path) -> SystemConfig:
    """Parse a TOML run configuration; raises ConfigError on any defect."""
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc

    try:
        name = doc.get("name", "custom")
        params = {str(k): float(v) for k, v in doc.get("params", {}).items()}
        names = set(params)
        fblock = doc["field"]
        u = VectorField2(_parse_expr(fblock["u1"], names, "field.u1"),
                         _parse_expr(fblock["u2"], names, "field.u2"))
        window = _window_from(doc["window"])
    except KeyError as exc:
        raise ConfigError(f"missing required config key: {exc}") from exc

    cfg = SystemConfig(name=name, params=params, field=u, window=window)

    if "criterion" in doc:
        blk = doc["criterion"]
        alpha = _parse_expr(blk["alpha"], names, "criterion.alpha") if "alpha" in blk else None
        noise = None
        if "B" in blk:
            b = blk["B"]
            noise = Matrix2Field(*(_parse_expr(b[k], names, f"criterion.B.{k}")
                                   for k in ("b11", "b12", "b21", "b22")))
        basepoint = None
        if "basepoint" in blk:
            basepoint = Point2(float(blk["basepoint"][0]), float(blk["basepoint"][1]))
        region = _window_from(blk["region"]) if "region" in blk else None
        cfg = replace(cfg, alpha=alpha, noise_B=noise, basepoint=basepoint, region=region)

    if "mapping" in doc:
        blk = doc["mapping"]
        inverse = None
        if blk.get("inverse") == "polar":
            inverse = polar_inverse
        elif "g1" in blk and "g2" in blk:
            inverse = (_parse_expr(blk["g1"], names, "mapping.g1"),
                       _parse_expr(blk["g2"], names, "mapping.g2"))
        domain = _window_from(blk["domain"]) if "domain" in blk else None
        cfg = replace(cfg, mapping=Mapping2(
            _parse_expr(blk["f1"], names, "mapping.f1"),
            _parse_expr(blk["f2"], names, "mapping.f2"),
            inverse=inverse, domain=domain, note=blk.get("note", "")))

    for kind in ("upper", "lower"):
        blk = doc.get("ansatz", {}).get(kind)
        if blk:
            try:
                if kind == "upper":
                    spec = AnsatzSpec.upper(_parse_expr(str(blk["a"]), names, "ansatz.a"),
                                            float(blk["b"]), float(blk.get("C", 0.0)))
                    cfg = replace(cfg, ansatz_upper=spec)
                else:
                    spec = AnsatzSpec.lower(float(blk["c"]),
                                            _parse_expr(str(blk["d"]), names, "ansatz.d"),
                                            float(blk.get("C", 0.0)))
                    cfg = replace(cfg, ansatz_lower=spec)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad ansatz.{kind} block: {exc}") from exc

    if "decompose" in doc:
        blk = doc["decompose"]
        method = blk.get("method", "numeric")
        if method == "lienard":
            q = tuple(_parse_expr(str(c), names, "decompose.q") for c in blk.get("q", []))
            cfg = replace(cfg, lienard=LienardSpec(_parse_expr(blk["p"], names, "decompose.p"), q),
                          decompose_method="lienard")
        elif method == "modal":
            cfg = replace(cfg, modal=ModalSpec(
                _parse_expr(blk["damping"], names, "decompose.damping"),
                _parse_expr(blk["frequency"], names, "decompose.frequency")),
                decompose_method="modal")
        elif method == "fixture":
            cfg = replace(cfg, hd=HelmholtzPair(
                _parse_expr(blk["V"], names, "decompose.V"),
                _parse_expr(blk["H"], names, "decompose.H")),
                decompose_method="fixture")
        elif method == "numeric":
            cfg = replace(cfg, decompose_method="numeric")
        else:
            raise ConfigError(f"unknown decompose method {method!r}")

    if "orbits" in doc:
        blk = doc["orbits"]
        seeds = tuple(Point2(float(s[0]), float(s[1])) for s in blk.get("seeds", []))
        cfg = replace(cfg, orbit_seeds=seeds, settle=float(blk.get("settle", 0.0)),
                      tmax=float(blk.get("tmax", 40.0)),
                      orbit_tol=float(blk.get("tol", 1e-6)))

    if "simulate" in doc:
        blk = doc["simulate"]
        cfg = replace(cfg,
                      gamma=float(blk.get("gamma", cfg.gamma)),
                      dt=float(blk.get("dt", cfg.dt)),
                      T=float(blk.get("T", cfg.T)),
                      ensemble_size=int(blk.get("ensemble", cfg.ensemble_size)),
                      seed=int(blk.get("seed", cfg.seed)),
                      scheme=str(blk.get("scheme", cfg.scheme)))

    return cfg

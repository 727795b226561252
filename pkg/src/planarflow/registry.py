"""Catalog of the built-in example systems.

Each entry is a fully specified SystemConfig: field expressions in the
canonical variables, default parameter values, working window, and whichever
extras apply (closed-form decomposition inputs, criterion multiplier and
known conserved quantity, coordinate mapping, ansatz matrices, orbit seeds).

Variables are always x1, x2 even when the original formulation uses other
letters (amplitude/phase, populations, coupled oscillator angles); parameters
keep their usual names.  The Lotka-Volterra entry uses the classical form
ẋ1 = x1(A - B x2), ẋ2 = x2(C x1 - D).
"""

from __future__ import annotations

import math

from .config import SystemConfig, polar_inverse
from .expr import Point2
from .geometry import Mapping2, Matrix2Field, VectorField2
from .grid import Grid2
from .helmholtz import HelmholtzPair, LienardSpec, ModalSpec
from .orbits import AnsatzSpec
from .parser import parse

__all__ = ["EXAMPLE_IDS", "example_config", "DEFAULT_COMMAND"]

_PI = math.pi


def _mk(name, params, u1, u2, window, **kw):
    names = set(params)
    extras = {}
    for key, value in kw.items():
        extras[key] = value
    return SystemConfig(name=name, params=dict(params),
                        field=VectorField2(parse(u1, names), parse(u2, names)),
                        window=window, **extras)


def _polar_mapping() -> Mapping2:
    return Mapping2(parse("x1*cos(x2)"), parse("x1*sin(x2)"),
                    inverse=polar_inverse,
                    domain=Grid2(0.1, 3.0, -3.2, 3.2, 24, 24),
                    note="amplitude-phase coordinates; singular on the x1 = 0 fiber")


def _build_harmonic() -> SystemConfig:
    params = {"omega0": 1.0, "gamma": 0.5, "F": 0.3, "omega": 1.3}
    names = set(params)
    return _mk(
        "harmonic", params,
        "omega0*x2",
        "-gamma*x2 - omega0*x1 + (F/omega0)*cos(omega*t)",
        Grid2(-2.5, 2.5, -2.5, 2.5, 64, 64),
        hd=HelmholtzPair(parse("gamma*x2^2/2 - (F/omega0)*x2*cos(omega*t)", names),
                         parse("omega0*(x1^2+x2^2)/2", names)),
        decompose_method="fixture",
        mapping=_polar_mapping(),
        noise_B=Matrix2Field.identity(),
        ansatz_upper=AnsatzSpec.upper(parse("1"), 1.0),
        ansatz_lower=AnsatzSpec.lower(1.0, parse("1")),
        # orbit commands run the steady normalized oscillator u = (x2, -x1)
        steady_params={"gamma": 0.0, "F": 0.0, "omega0": 1.0},
        orbit_seeds=(Point2(0.5, 0.0), Point2(1.0, 0.0), Point2(2.0, 0.0)),
        tmax=20.0,
        gamma=0.05, dt=1e-3, T=1.0, ensemble_size=1000,
    )


def _build_lienard() -> SystemConfig:
    params = {"q0": 0.4, "q1": 0.3, "q2": 1.0}
    names = set(params)
    p = parse("x1", names)
    q = (parse("q0", names), parse("q1", names), parse("q2", names))
    return _mk(
        "lienard", params,
        "x2", "-x1 - (q0 + q1*x1 + q2*x1^2)*x2",
        Grid2(-2.0, 2.0, -2.0, 2.0, 64, 64),
        lienard=LienardSpec(p, q), decompose_method="lienard",
    )


def _build_modal() -> SystemConfig:
    params = {"mu": 1.0, "omega": 1.0}
    names = set(params)
    return _mk(
        "modal", params,
        "(mu - x1^2)*x1", "omega",
        Grid2(0.1, 2.0, -_PI, _PI, 64, 64),
        modal=ModalSpec(parse("mu - x1^2", names), parse("omega", names)),
        decompose_method="modal",
    )


def _build_lotka_volterra() -> SystemConfig:
    params = {"A": 1.0, "B": 1.0, "C": 1.0, "D": 1.0}
    names = set(params)
    return _mk(
        "lotka_volterra", params,
        "x1*(A - B*x2)", "x2*(C*x1 - D)",
        Grid2(0.2, 3.0, 0.2, 3.0, 64, 64),
        alpha=parse("1/(x1*x2)", names),
        reference_h=parse("D*ln(x1) - C*x1 + A*ln(x2) - B*x2", names),
        basepoint=Point2(1.0, 1.0),
        region=Grid2(0.2, 3.0, 0.2, 3.0, 48, 48),
    )


def _build_kermack() -> SystemConfig:
    params = {"k": 1.0, "l": 1.0}
    names = set(params)
    return _mk(
        "kermack", params,
        "-k*x1*x2", "k*x1*x2 - l*x2",
        Grid2(0.2, 4.0, 0.2, 4.0, 64, 64),
        alpha=parse("1/(k*x1*x2)", names),
        reference_h=parse("(l/k)*ln(x1) - x1 - x2", names),
        basepoint=Point2(1.0, 1.0),
        region=Grid2(0.2, 4.0, 0.2, 4.0, 48, 48),
    )


def _build_kuramoto_pair() -> SystemConfig:
    params = {"J": 1.0, "K": -1.0}
    names = set(params)
    return _mk(
        "kuramoto_pair", params,
        "-J*sin(x1)*cos(x2)", "-K*sin(x2)*cos(x1)",
        Grid2(0.15, _PI - 0.15, 0.15, _PI - 0.15, 64, 64),
        alpha=parse("sin(x2)^(J-1)/sin(x1)^(K+1)", names),
        reference_h=parse("-(sin(x2)^J/sin(x1)^K)", names),
        basepoint=Point2(1.0, 1.0),
        region=Grid2(0.15, _PI - 0.15, 0.15, _PI - 0.15, 48, 48),
    )


def _build_strogatz() -> SystemConfig:
    return _mk(
        "strogatz", {},
        "x1*x2", "-(x1^2)",
        Grid2(0.2, 3.0, -2.0, 2.0, 64, 64),
        alpha=parse("1/x1"),
        reference_h=parse("(x1^2+x2^2)/2"),
        basepoint=Point2(1.0, 0.0),
        region=Grid2(0.2, 3.0, -2.0, 2.0, 48, 48),
    )


def _build_vanderpol() -> SystemConfig:
    params = {"alpha": 0.7}
    names = set(params)
    return _mk(
        "vanderpol", params,
        "x2", "-x1 + alpha*(1-x1^2)*x2",
        Grid2(-2.5, 2.5, -4.0, 4.0, 64, 64),
        alpha=parse("1"),  # criterion with trivial multiplier: not Hamiltonian
        lienard=LienardSpec(parse("x1"),
                            (parse("-alpha", names), parse("0"), parse("alpha", names))),
        decompose_method="lienard",
        ansatz_upper=AnsatzSpec.upper(parse("1"), 1.0),
        ansatz_lower=AnsatzSpec.lower(1.0, parse("1")),
        orbit_seeds=(Point2(0.1, 0.0),),
        settle=150.0, tmax=60.0,
    )


def _build_duffing() -> SystemConfig:
    return _mk(
        "duffing", {},
        "x2", "x1 - x1^3",
        Grid2(-2.0, 2.0, -1.5, 1.5, 64, 64),
        lienard=LienardSpec(parse("x1^3 - x1"), ()),
        decompose_method="lienard",
        reference_h=parse("(x2^2 - x1^2)/2 + x1^4/4"),
        ansatz_upper=AnsatzSpec.upper(parse("1"), 1.0),
        ansatz_lower=AnsatzSpec.lower(1.0, parse("1")),
        orbit_seeds=(Point2(0.5, 0.0), Point2(-0.5, 0.0), Point2(0.0, 1.0)),
        tmax=40.0,
    )


_BUILDERS = {
    "harmonic": _build_harmonic,
    "lienard": _build_lienard,
    "modal": _build_modal,
    "lotka_volterra": _build_lotka_volterra,
    "kermack": _build_kermack,
    "kuramoto_pair": _build_kuramoto_pair,
    "strogatz": _build_strogatz,
    "vanderpol": _build_vanderpol,
    "duffing": _build_duffing,
}

EXAMPLE_IDS = tuple(_BUILDERS)

DEFAULT_COMMAND = {
    "harmonic": "decompose",
    "lienard": "decompose",
    "modal": "decompose",
    "lotka_volterra": "check-hamiltonian",
    "kermack": "check-hamiltonian",
    "kuramoto_pair": "check-hamiltonian",
    "strogatz": "check-hamiltonian",
    "vanderpol": "exclude-orbits",
    "duffing": "exclude-orbits",
}


def example_config(example_id: str) -> SystemConfig:
    try:
        return _BUILDERS[example_id]()
    except KeyError:
        raise KeyError(f"unknown example id {example_id!r}; "
                       f"known: {', '.join(EXAMPLE_IDS)}") from None

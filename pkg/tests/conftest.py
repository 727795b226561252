"""Shared helpers: seeded random expressions, fields and mappings."""

import numpy as np
import pytest

from planarflow.expr import (Abs, Add, Constant, Cos, Div, Exp, Mul, Neg,
                             Parameter, Pow, Sin, Sqrt, Sub, Variable)
from planarflow.geometry import Mapping2
from planarflow.grid import Grid2
from planarflow.parser import parse


def random_expr(rng, depth, leaves=("x1", "x2", "t")):
    """Random tree over the full node set, biased toward benign shapes."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.45:
            return Variable(leaves[rng.integers(len(leaves))])
        if r < 0.9:
            return Constant(round(float(rng.uniform(-3, 3)), 3))
        return Constant(float(rng.integers(1, 4)))
    roll = rng.random()
    if roll < 0.18:
        return Add(random_expr(rng, depth - 1, leaves), random_expr(rng, depth - 1, leaves))
    if roll < 0.34:
        return Sub(random_expr(rng, depth - 1, leaves), random_expr(rng, depth - 1, leaves))
    if roll < 0.52:
        return Mul(random_expr(rng, depth - 1, leaves), random_expr(rng, depth - 1, leaves))
    if roll < 0.60:
        return Div(random_expr(rng, depth - 1, leaves),
                   Add(Constant(2.0), Mul(random_expr(rng, depth - 1, leaves),
                                          random_expr(rng, depth - 1, leaves))))
    if roll < 0.66:
        return Neg(random_expr(rng, depth - 1, leaves))
    if roll < 0.74:
        return Pow(random_expr(rng, depth - 1, leaves), Constant(float(rng.integers(2, 4))))
    if roll < 0.82:
        return Sin(random_expr(rng, depth - 1, leaves))
    if roll < 0.90:
        return Cos(random_expr(rng, depth - 1, leaves))
    if roll < 0.94:
        return Exp(Mul(Constant(0.3), random_expr(rng, depth - 1, leaves)))
    if roll < 0.97:
        return Sqrt(Add(Constant(1.0), Pow(random_expr(rng, depth - 1, leaves), Constant(2.0))))
    return Abs(random_expr(rng, depth - 1, leaves))


def random_polynomial(rng, degree, leaves=("x1", "x2")):
    """Random polynomial with small integer-ish coefficients."""
    total = Constant(0.0)
    for _ in range(rng.integers(2, 6)):
        term = Constant(round(float(rng.uniform(-2, 2)), 2))
        for _ in range(int(rng.integers(0, degree + 1))):
            term = Mul(term, Variable(leaves[rng.integers(len(leaves))]))
        total = Add(total, term)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def polar_mapping():
    from planarflow.config import polar_inverse
    return Mapping2(parse("x1*cos(x2)"), parse("x1*sin(x2)"),
                    inverse=polar_inverse,
                    domain=Grid2(0.1, 3.0, -3.2, 3.2, 24, 24),
                    note="amplitude-phase coordinates")

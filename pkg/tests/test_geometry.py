"""Mappings, polar decomposition, metric tensors and the transformation law."""

import math

import numpy as np
import pytest

from planarflow.errors import NotOrthogonal, SingularJacobian
from planarflow.expr import Constant, compile_pair
from planarflow.geometry import (Mapping2, Matrix2, Matrix2Field, VectorField2,
                                 jacobian, metric_tensor, polar_decompose,
                                 polar_factors_field, pushforward,
                                 transform_noise, transform_system)
from planarflow.grid import Grid2
from planarflow.helmholtz import Curvilinear, HelmholtzPair, reconstruct
from planarflow.parser import parse
from planarflow.simplify import is_zero_expr, simplify

from conftest import polar_mapping, random_polynomial

PARAMS = {"gamma": 0.4, "F": 0.3, "omega0": 1.1, "omega": 0.9}
NAMES = set(PARAMS)


def harmonic_pair():
    return HelmholtzPair(parse("gamma*x2^2/2 - (F/omega0)*x2*cos(omega*t)", NAMES),
                         parse("omega0*(x1^2+x2^2)/2", NAMES))


class TestJacobian:
    def test_polar(self):
        J = jacobian(polar_mapping())
        assert J.e11 == parse("cos(x2)")
        assert is_zero_expr(J.e12 - parse("-(x1*sin(x2))"))
        assert J.e21 == parse("sin(x2)")
        assert is_zero_expr(J.e22 - parse("x1*cos(x2)"))

    def test_identity(self):
        J = jacobian(Mapping2(parse("x1"), parse("x2")))
        assert (J.e11, J.e12, J.e21, J.e22) == (Constant(1.0), Constant(0.0),
                                                Constant(0.0), Constant(1.0))

    def test_swap(self):
        J = jacobian(Mapping2(parse("x2"), parse("x1")))
        assert (J.e11, J.e12, J.e21, J.e22) == (Constant(0.0), Constant(1.0),
                                                Constant(1.0), Constant(0.0))


class TestPolarDecompose:
    def test_polar_map_point(self):
        J = Matrix2.from_array(jacobian(polar_mapping()).evaluate((2.0, math.pi / 3)))
        pf = polar_decompose(J)
        c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
        assert pf.Q.as_array() == pytest.approx(np.array([[c, -s], [s, c]]), abs=1e-12)
        assert pf.h.as_array() == pytest.approx(np.diag([1.0, 2.0]), abs=1e-12)
        assert pf.detQ == 1

    def test_identity(self):
        pf = polar_decompose(Matrix2(1, 0, 0, 1))
        assert pf.Q.as_array() == pytest.approx(np.eye(2))
        assert pf.h.as_array() == pytest.approx(np.eye(2))
        assert pf.detQ == 1

    def test_reflection(self):
        pf = polar_decompose(Matrix2(0, 1, 1, 0))
        assert pf.Q.as_array() == pytest.approx(np.array([[0, 1], [1, 0]]))
        assert pf.h.as_array() == pytest.approx(np.eye(2))
        assert pf.detQ == -1

    def test_singular(self):
        with pytest.raises(SingularJacobian):
            polar_decompose(Matrix2(1, 2, 2, 4))

    def test_random_invariants(self, rng):
        for _ in range(200):
            a = rng.uniform(-3, 3, (2, 2))
            if abs(np.linalg.det(a)) < 0.1:
                continue
            pf = polar_decompose(Matrix2.from_array(a))
            q, h = pf.Q.as_array(), pf.h.as_array()
            assert np.abs(q @ h - a).max() <= 1e-12 * max(1, np.abs(a).max())
            assert np.abs(q.T @ q - np.eye(2)).max() <= 1e-12
            eigs = np.linalg.eigvalsh(h)
            assert eigs.min() > 0
            # det h equals the positive square root of det g
            detg = np.linalg.det(a.T @ a)
            assert np.linalg.det(h) == pytest.approx(math.sqrt(detg), rel=1e-10)
            assert pf.detQ == (1 if np.linalg.det(a) > 0 else -1)


class TestMetricTensor:
    def test_polar(self):
        g, detg = metric_tensor(polar_mapping())
        assert g.e11 == Constant(1.0)
        assert is_zero_expr(g.e12)
        assert g.e22 == simplify(parse("x1^2"))
        assert detg == simplify(parse("x1^2"))

    def test_identity(self):
        g, detg = metric_tensor(Mapping2(parse("x1"), parse("x2")))
        assert (g.e11, g.e22, detg) == (Constant(1.0), Constant(1.0), Constant(1.0))
        assert is_zero_expr(g.e12)

    def test_constant_diagonal(self):
        g, detg = metric_tensor(Mapping2(parse("2*x1"), parse("3*x2")))
        assert g.e11 == Constant(4.0)
        assert g.e22 == Constant(9.0)
        assert detg == Constant(36.0)


class TestTransformSystem:
    def test_harmonic_amplitude_phase(self):
        tf = transform_system(harmonic_pair(), polar_mapping(), PARAMS)
        want1 = parse("-gamma*x1*sin(x2)^2 + (F/omega0)*cos(omega*t)*sin(x2)", NAMES)
        want2 = parse("-omega0 - gamma*sin(x2)*cos(x2) + (F/(omega0*x1))*cos(omega*t)*cos(x2)", NAMES)
        got = compile_pair(tf.u1, tf.u2, PARAMS)
        want = compile_pair(want1, want2, PARAMS)
        grid = Grid2(0.1, 3.0, 0.0, 2 * math.pi, 50, 50)
        xx, yy = grid.mesh()
        for t in (0.0, 0.7, 2.1):
            g1, g2 = got(xx, yy, t)
            w1, w2 = want(xx, yy, t)
            assert np.abs(g1 - w1).max() <= 1e-10
            assert np.abs(g2 - w2).max() <= 1e-10

    def test_identity_map(self):
        hd = harmonic_pair()
        tf = transform_system(hd, Mapping2(parse("x1"), parse("x2")), PARAMS)
        u = reconstruct(hd)
        assert is_zero_expr(tf.u1 - u.u1)
        assert is_zero_expr(tf.u2 - u.u2)

    def test_pure_hamiltonian_sign(self):
        hd = HelmholtzPair(Constant(0.0), parse("(x1^2+x2^2)/2"))
        tf = transform_system(hd, polar_mapping())
        fn = compile_pair(tf.u1, tf.u2)
        grid = Grid2(0.1, 3.0, -3.0, 3.0, 20, 20)
        xx, yy = grid.mesh()
        v1, v2 = fn(xx, yy, 0.0)
        assert np.abs(v1).max() <= 1e-12
        assert np.abs(np.broadcast_to(v2, xx.shape) + 1.0).max() <= 1e-12

    def test_requires_cartesian(self):
        hd = HelmholtzPair(Constant(0.0), Constant(0.0),
                           Curvilinear(Matrix2Field.identity()))
        with pytest.raises(ValueError):
            transform_system(hd, polar_mapping())

    def test_singular_domain_rejected(self):
        bad = Mapping2(parse("x1*cos(x2)"), parse("x1*sin(x2)"),
                       domain=Grid2(-1.0, 1.0, -1.0, 1.0, 9, 9))
        with pytest.raises(SingularJacobian):
            transform_system(harmonic_pair(), bad, PARAMS)


class TestPushforward:
    def test_harmonic_polar_matches_transform(self):
        hd = harmonic_pair()
        a = transform_system(hd, polar_mapping(), PARAMS)
        b = pushforward(reconstruct(hd), polar_mapping())
        fa = compile_pair(a.u1, a.u2, PARAMS)
        fb = compile_pair(b.u1, b.u2, PARAMS)
        grid = Grid2(0.1, 3.0, -3.0, 3.0, 30, 30)
        xx, yy = grid.mesh()
        for t in (0.0, 1.3):
            a1, a2 = fa(xx, yy, t)
            b1, b2 = fb(xx, yy, t)
            assert np.abs(a1 - b1).max() <= 1e-9
            assert np.abs(a2 - b2).max() <= 1e-9

    def test_identity(self):
        u = VectorField2(parse("x2*exp(x1/3)"), parse("-x1"))
        v = pushforward(u, Mapping2(parse("x1"), parse("x2")))
        assert is_zero_expr(v.u1 - u.u1)
        assert is_zero_expr(v.u2 - u.u2)

    def test_linear_scaling(self):
        u = VectorField2(parse("x2"), parse("-x1"))
        v = pushforward(u, Mapping2(parse("2*x1"), parse("2*x2")))
        assert is_zero_expr(v.u1 - parse("x2"))
        assert is_zero_expr(v.u2 - parse("-x1"))

    def test_round_trip_through_inverse(self, rng):
        # smooth invertible mapping with a closed-form inverse
        fwd = Mapping2(parse("exp(x1)"), parse("x2 + x1"),
                       domain=Grid2(-1.0, 1.0, -1.0, 1.0, 12, 12))
        inv = Mapping2(parse("ln(x1)"), parse("x2 - ln(x1)"),
                       domain=Grid2(0.5, 2.5, -2.0, 2.0, 12, 12))
        for _ in range(5):
            u = VectorField2(simplify(random_polynomial(rng, 2)),
                             simplify(random_polynomial(rng, 2)))
            there = pushforward(u, fwd)
            back = pushforward(there, inv)
            f_u = compile_pair(u.u1, u.u2)
            f_b = compile_pair(back.u1, back.u2)
            grid = Grid2(0.5, 2.3, -1.5, 1.5, 15, 15)
            xx, yy = grid.mesh()
            u1, u2 = f_u(xx, yy, 0.0)
            b1, b2 = f_b(xx, yy, 0.0)
            scale = 1.0 + max(np.abs(np.broadcast_to(u1, xx.shape)).max(),
                              np.abs(np.broadcast_to(u2, xx.shape)).max())
            assert np.abs(b1 - u1).max() <= 1e-9 * scale
            assert np.abs(b2 - u2).max() <= 1e-9 * scale

    def test_degenerate_map(self):
        with pytest.raises(SingularJacobian):
            pushforward(VectorField2(parse("x2"), parse("-x1")),
                        Mapping2(parse("x1"), parse("x1")))


class TestEquationSixConsistency:
    def test_random_diagonal_metric_cases(self, rng):
        # separable monotone mappings give diagonal metrics
        for _ in range(8):
            a, b = (float(v) for v in rng.uniform(0.5, 1.5, 2))
            c, d = (float(v) for v in rng.uniform(0.1, 0.6, 2))
            f = Mapping2(parse(f"{a!r}*x1 + {c!r}*x1^3"),
                         parse(f"{b!r}*x2 + {d!r}*x2^3"),
                         domain=Grid2(0.2, 1.8, 0.2, 1.8, 10, 10))
            hd = HelmholtzPair(simplify(random_polynomial(rng, 3)),
                               simplify(random_polynomial(rng, 3)))
            lhs = transform_system(hd, f)
            rhs = pushforward(reconstruct(hd), f)
            fa = compile_pair(lhs.u1, lhs.u2)
            fb = compile_pair(rhs.u1, rhs.u2)
            grid = Grid2(0.25, 1.7, 0.25, 1.7, 14, 14)
            xx, yy = grid.mesh()
            a1, a2 = fa(xx, yy, 0.0)
            b1, b2 = fb(xx, yy, 0.0)
            scale = 1.0 + max(np.abs(np.broadcast_to(b1, xx.shape)).max(),
                              np.abs(np.broadcast_to(b2, xx.shape)).max())
            assert np.abs(a1 - b1).max() <= 1e-9 * scale
            assert np.abs(a2 - b2).max() <= 1e-9 * scale


class TestTransformNoise:
    def test_polar_q(self):
        q, h = polar_factors_field(polar_mapping())
        qt = transform_noise(q, probe=Grid2(0.1, 3.0, -3.0, 3.0, 16, 16))
        # transposed rotation: entries swap off the diagonal
        p = (1.7, 0.6)
        m = qt.evaluate(p)
        c, s = math.cos(0.6), math.sin(0.6)
        assert m == pytest.approx(np.array([[c, s], [-s, c]]), abs=1e-12)

    def test_identity(self):
        qt = transform_noise(Matrix2Field.identity())
        assert qt.e12 == Constant(0.0)

    def test_rotation_by_pi(self):
        q = Matrix2Field.constant(Matrix2(-1, 0, 0, -1))
        qt = transform_noise(q)
        v = qt.evaluate((0.3, 0.4))
        assert v == pytest.approx(-np.eye(2))

    def test_not_orthogonal(self):
        q = Matrix2Field.constant(Matrix2(1.0, 0.1, 0.0, 1.0))
        with pytest.raises(NotOrthogonal):
            transform_noise(q)

    def test_polar_factors_require_diagonal_metric(self):
        shear = Mapping2(parse("x1 + x2"), parse("x2"))
        with pytest.raises(ValueError):
            polar_factors_field(shear)

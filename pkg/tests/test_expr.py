"""Expression core: parsing, evaluation, differentiation, simplification."""

import math

import numpy as np
import pytest

from planarflow.errors import DomainError, ExprSyntaxError, UnknownIdentifier
from planarflow.expr import (Abs, Constant, Div, Mul, Neg, Parameter, Point2,
                             Pow, Sub, Variable, X1, X2, compile_fn, evaluate,
                             differentiate, finite_difference, free_names,
                             serialize, substitute)
from planarflow.grid import Grid2
from planarflow.parser import parse
from planarflow.simplify import (is_identically_zero, is_zero_expr,
                                 simplify)

from conftest import random_expr


class TestParse:
    def test_single_token(self):
        assert parse("x2") == Variable("x2")

    def test_duffing_restoring_term(self):
        assert parse("x1 - x1^3") == Sub(X1, Pow(X1, Constant(3.0)))

    def test_undeclared_identifier(self):
        with pytest.raises(UnknownIdentifier) as err:
            parse("sin(y)*cos(theta)")
        assert err.value.name == "y"
        assert err.value.offset == 4

    def test_declared_parameters(self):
        e = parse("gamma*x2^2/2", ["gamma"])
        assert e.left.left == Parameter("gamma")
        assert "gamma" in free_names(e)

    def test_syntax_error_offset(self):
        with pytest.raises(ExprSyntaxError) as err:
            parse("x1 + * x2")
        assert err.value.offset == 5

    def test_unbalanced_parens(self):
        with pytest.raises(ExprSyntaxError):
            parse("sin(x1")

    def test_power_binds_the_unary(self):
        # grammar: factor := unary ('^' factor)?, so -x1^2 is (-x1)^2
        assert parse("-x1^2") == Pow(Neg(X1), Constant(2.0))

    def test_power_right_associative(self):
        e = parse("x1^2^3")
        assert isinstance(e.exponent, Pow)

    def test_pi(self):
        assert parse("pi") == Constant(math.pi)

    def test_trailing_input(self):
        with pytest.raises(ExprSyntaxError):
            parse("x1 x2")


class TestEvaluate:
    def test_sin_pi_half(self):
        assert evaluate(parse("sin(pi/2)"), (0.0, 0.0)) == 1.0

    def test_harmonic_hamiltonian_at_point(self):
        assert evaluate(parse("(x1^2+x2^2)/2"), Point2(1.0, 0.0)) == 0.5

    def test_ln_of_negative(self):
        with pytest.raises(DomainError):
            evaluate(parse("ln(x1)"), (-1.0, 0.0))

    def test_division_by_zero(self):
        with pytest.raises(DomainError):
            evaluate(parse("1/x1"), (0.0, 1.0))

    def test_zero_to_negative_power(self):
        with pytest.raises(DomainError):
            evaluate(parse("x1^(-2)"), (0.0, 1.0))

    def test_fractional_power_of_negative(self):
        with pytest.raises(DomainError):
            evaluate(Pow(Constant(-2.0), Constant(0.5)), (0.0, 0.0))

    def test_integer_power_of_negative(self):
        assert evaluate(Pow(Constant(-2.0), Constant(3.0)), (0.0, 0.0)) == -8.0

    def test_unbound_parameter(self):
        with pytest.raises(DomainError):
            evaluate(Parameter("k"), (0.0, 0.0))

    def test_params_and_time(self):
        v = evaluate(parse("F*cos(omega*t)", ["F", "omega"]), (0, 0), t=0.5,
                     params={"F": 2.0, "omega": math.pi})
        assert v == pytest.approx(2.0 * math.cos(math.pi * 0.5))

    def test_deterministic_across_calls(self):
        e = parse("sin(x1)*exp(x2/3) - sqrt(1+x1^2)")
        vals = {evaluate(e, (0.37, -1.2)) for _ in range(20)}
        assert len(vals) == 1


class TestDifferentiate:
    def test_duffing_derivative(self):
        d = simplify(differentiate(parse("x1 - x1^3"), "x1"))
        assert d == simplify(parse("1 - 3*x1^2"))

    def test_potential_derivative(self):
        d = simplify(differentiate(parse("gamma*x2^2/2", ["gamma"]), "x2"))
        assert d == simplify(parse("gamma*x2", ["gamma"]))

    def test_time_derivative(self):
        d = simplify(differentiate(parse("sin(omega*t)", ["omega"]), "t"))
        assert is_zero_expr(d - parse("omega*cos(omega*t)", ["omega"]))

    def test_abs_away_from_zero(self):
        d = differentiate(Abs(X1), "x1")
        assert evaluate(d, (2.0, 0.0)) == 1.0
        assert evaluate(d, (-2.0, 0.0)) == -1.0

    def test_abs_at_zero_raises(self):
        d = differentiate(Abs(X1), "x1")
        with pytest.raises(DomainError):
            evaluate(d, (0.0, 0.0))

    def test_closure_over_node_set(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            e = random_expr(rng, 4)
            for var in ("x1", "x2", "t"):
                differentiate(e, var)  # must not raise

    def test_matches_central_differences(self):
        rng = np.random.default_rng(123)
        checked = 0
        for _ in range(120):
            e = random_expr(rng, 6)
            for var in ("x1", "x2"):
                d = differentiate(e, var)
                for _ in range(6):
                    p = (float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
                    t = float(rng.uniform(-1, 1))
                    try:
                        val = evaluate(e, p, t)
                        sym = evaluate(d, p, t)
                        num = finite_difference(e, var, p, t, h=1e-5)
                        num_coarse = finite_difference(e, var, p, t, h=2e-5)
                    except DomainError:
                        continue
                    tol = 1e-6 * (1.0 + abs(val))
                    if abs(num - num_coarse) > 0.25 * tol:
                        continue  # the difference quotient itself is not converged here
                    assert abs(sym - num) <= tol, serialize(e)
                    checked += 1
        assert checked > 300


class TestSimplify:
    def test_zero_times(self):
        assert simplify(parse("0*x1 + x2")) == X2

    def test_cancellation(self):
        assert simplify(parse("x1*x2 - x1*x2")) == Constant(0.0)

    def test_unit_product(self):
        assert simplify(parse("(1-3*x1^2)*1 + 0")) == simplify(parse("1 - 3*x1^2"))

    def test_values_preserved(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 10_000:
            e = random_expr(rng, 5)
            s = simplify(e)
            for _ in range(25):
                p = (float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
                t = float(rng.uniform(-1, 1))
                try:
                    a = evaluate(e, p, t)
                except DomainError:
                    continue
                b = evaluate(s, p, t)
                assert abs(a - b) <= 1e-9 * (1.0 + abs(a)), serialize(e)
                checked += 1

    def test_rational_cancellation(self):
        assert is_zero_expr(parse("x1/x1 - 1"))
        assert is_zero_expr(parse("1/(x1-x2) + 1/(x2-x1)"))

    def test_trig_square_identity(self):
        assert is_zero_expr(parse("sin(x1)^2 + cos(x1)^2 - 1"))


class TestSerializeRoundTrip:
    CORPUS = [
        "x1 - x1^3",
        "x2",
        "gamma*x2^2/2 - (F/omega0)*x2*cos(omega*t)",
        "omega0*(x1^2+x2^2)/2",
        "-k*x1*x2",
        "k*x1*x2 - l*x2",
        "1/(k*x1*x2)",
        "-J*sin(x1)*cos(x2)",
        "sin(x2)^(J-1)/sin(x1)^(K+1)",
        "x1*x2",
        "-(x1^2)",
        "-x1 + alpha*(1-x1^2)*x2",
        "(mu - x1^2)*x1",
        "exp(x1*x2) - ln(1+x1^2)",
        "sqrt(1 + x2^2)/abs(x1)",
        "(l/k)*ln(x1) - x1 - x2",
    ]
    PARAMS = ["gamma", "F", "omega0", "omega", "k", "l", "J", "K", "alpha", "mu"]

    def test_fixture_corpus(self):
        for text in self.CORPUS:
            canonical = simplify(parse(text, self.PARAMS))
            again = parse(serialize(canonical), self.PARAMS)
            assert again == canonical, text

    def test_random_corpus(self):
        rng = np.random.default_rng(99)
        done = 0
        while done < 60:
            canonical = simplify(random_expr(rng, 5))
            again = parse(serialize(canonical))
            assert again == canonical, serialize(canonical)
            done += 1


class TestIsIdenticallyZero:
    def test_symbolic_verdict(self):
        z = is_identically_zero(parse("x1*x2 - x1*x2"))
        assert z and z.mode == "symbolic"

    def test_numeric_verdict(self):
        probe = Grid2(0.2, 3.0, 0.2, 3.0, 16, 16)
        # div(alpha F) for Kermack-McKendrick written without symbolic cleanup
        e = parse("sin(x1)^2 + cos(x1)^2 - 1")
        z = is_identically_zero(Mul(e, parse("exp(x2)")), probe)
        assert z.zero

    def test_nonzero(self):
        probe = Grid2(-2, 2, -2, 2, 16, 16)
        z = is_identically_zero(parse("1 - x1^2"), probe)
        assert not z and z.max_abs > 1.0

    def test_probe_too_small(self):
        with pytest.raises(ValueError):
            is_identically_zero(parse("exp(x1) - x2"), Grid2(-1, 1, -1, 1, 8, 8))

    def test_all_points_out_of_domain(self):
        probe = Grid2(-2, -1, -2, -1, 16, 16)
        with pytest.raises(DomainError):
            is_identically_zero(parse("ln(x1) + ln(x2) + 1"), probe)


class TestHelpers:
    def test_free_names(self):
        e = parse("k*x1 + sin(omega*t)", ["k", "omega"])
        assert free_names(e) == {"k", "x1", "omega", "t"}

    def test_substitute(self):
        e = substitute(parse("x1 + x2"), {"x1": parse("2*x2")})
        assert simplify(e) == simplify(parse("3*x2"))

    def test_point_finite(self):
        with pytest.raises(ValueError):
            Point2(float("inf"), 0.0)

    def test_compiled_matches_evaluate(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            e = random_expr(rng, 4)
            fn = compile_fn(e, mode="math")
            for _ in range(5):
                p = (float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
                try:
                    want = evaluate(e, p, 0.3)
                except DomainError:
                    continue
                try:
                    got = fn(p[0], p[1], 0.3)
                except (ValueError, ZeroDivisionError, OverflowError):
                    continue
                assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

import random

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from ddnoether.expr import (Context, ExprError, Jet, ParseError, is_zero, jets, normalize,
                            parse, partial, render, substitute)

from _cases import CTX, expression


def P(text, ctx=CTX):
    return parse(text, ctx)


class TestContext:
    def test_dimensions(self):
        c = Context(["t", "x"], ["n"], ["u", "w"])
        assert (c.p1, c.p2, c.q) == (2, 1, 2)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ExprError, match="duplicate"):
            Context(["t"], ["t"], ["u"])

    def test_needs_an_independent_variable(self):
        with pytest.raises(ExprError):
            Context([], [], ["u"])

    def test_needs_a_dependent_variable(self):
        with pytest.raises(ExprError):
            Context(["t"], [], [])

    def test_auxiliary_stem_avoids_dependent_names(self):
        c = Context(["t"], ["n"], ["v"]).with_auxiliary()
        assert c.auxiliary and "v" not in c.auxiliary


class TestParse:
    def test_volterra_lhs(self):
        e = P("u[1;0] / u - u[0;1] + u[0;-1]")
        u = CTX.base("u")
        want = CTX.jet("u", (1,), (0,)) / u - CTX.jet("u", (0,), (1,)) + CTX.jet("u", (0,), (-1,))
        assert normalize(e - want) == 0

    def test_cancellation(self):
        assert P("u[0;0] - u[0;0]") == 0

    def test_parity_squared(self):
        assert P("(-1)^n * (-1)^n") == 1

    def test_bare_name_is_unshifted_atom(self):
        assert P("u") == CTX.jet("u", (0,), (0,))

    def test_operators_applied_eagerly(self):
        assert normalize(P("D[t](u*u[0;1])") - P("u[1;0]*u[0;1] + u*u[1;1]")) == 0
        assert P("S[n](u*u[0;-1])") == P("u[0;1]*u")

    def test_two_continuous_index_layout(self):
        c = Context(["t", "x"], [], ["u"])
        a = parse("u[0,3;]", c)
        assert isinstance(a, Jet) and a.deriv == (0, 3) and a.shift == ()

    def test_syntax_error_reports_byte_offset(self):
        with pytest.raises(ParseError) as info:
            P("u[0;1] + * u")
        assert info.value.offset == 9

    def test_byte_offset_counts_utf8(self):
        with pytest.raises(ParseError) as info:
            P("u + é")
        assert info.value.offset == 4

    def test_unknown_identifier(self):
        with pytest.raises(ParseError, match="unknown"):
            P("u + w")

    def test_negative_derivative_rejected(self):
        with pytest.raises(ParseError):
            P("u[-1;0]")

    def test_index_arity_mismatch(self):
        with pytest.raises(ParseError):
            P("u[1,0;0]")

    def test_floats_rejected(self):
        with pytest.raises(ParseError):
            P("0.5*u")

    def test_division_by_literal_zero(self):
        with pytest.raises(ExprError):
            P("u/0")


class TestNormalize:
    def test_like_terms(self):
        u = CTX.base("u")
        assert normalize(2 * u + 3 * u) == 5 * u

    def test_exp_of_zero_argument(self):
        u = CTX.base("u")
        assert normalize(sp.exp(u - u)) == 1

    def test_commutativity(self):
        assert is_zero(P("u*u[0;1] - u[0;1]*u"))

    def test_rational_cancellation(self):
        assert P("(u^2 - u[0;1]^2)/(u - u[0;1])") == P("u + u[0;1]")

    def test_exp_products_combine(self):
        assert is_zero(P("exp(u)*exp(u[0;1]) - exp(u + u[0;1])"))


class TestPartial:
    def test_quotient(self):
        u = CTX.base("u")
        assert partial(P("u[1;0]/u"), CTX.jet("u", (1,), (0,))) == 1 / u

    def test_chain_rule(self):
        a = CTX.jet("u", (0,), (1,))
        assert normalize(partial(P("exp(u - u[0;1])"), a) + P("exp(u - u[0;1])")) == 0

    def test_absent_atom(self):
        assert partial(P("u*u[0;1]"), CTX.jet("u", (0,), (-1,))) == 0


class TestSubstitute:
    actx = Context(["t"], ["n"], ["u"], auxiliary=["v"])

    def test_volterra_adjoint_to_equation(self):
        c = self.actx
        e = parse("-v[1;0]/u + v[0;1] - v[0;-1]", c)
        b = {c.jet("v", d, s): -c.jet("u", d, s) for d, s in (((1,), (0,)), ((0,), (1,)), ((0,), (-1,)))}
        assert normalize(substitute(e, b, c) - parse("u[1;0]/u - u[0;1] + u[0;-1]", c)) == 0

    def test_identity_binding(self):
        e = P("u*u[0;1] + exp(u)")
        assert substitute(e, {CTX.base("u"): CTX.base("u")}) == e

    def test_unbound_shifted_auxiliary(self):
        c = Context([], ["m", "n"], ["u"], auxiliary=["v"])
        e = parse("v + v[;-1,0]", c)
        b = {c.base("v"): parse("(-1)^(m+n)*(u[;1,1] - u)", c)}
        with pytest.raises(ExprError, match="unbound shifted auxiliary atom"):
            substitute(e, b, c)


@settings(max_examples=200, deadline=None, derandomize=True)
@given(st.randoms(use_true_random=False))
def test_normalize_idempotent(rng):
    e = normalize(expression(rng))
    assert normalize(e) == e


@settings(max_examples=200, deadline=None, derandomize=True)
@given(st.randoms(use_true_random=False))
def test_render_parse_round_trip(rng):
    e = normalize(expression(rng))
    assert parse(render(e, CTX), CTX) == e


@settings(max_examples=200, deadline=None, derandomize=True)
@given(st.randoms(use_true_random=False))
def test_partial_is_a_derivation(rng):
    a, b = expression(rng), expression(rng)
    x = CTX.jet("u", (rng.randint(0, 2),), (rng.randint(-2, 2),))
    assert is_zero(partial(a * b, x) - partial(a, x) * b - a * partial(b, x))


@settings(max_examples=100, deadline=None, derandomize=True)
@given(st.randoms(use_true_random=False))
def test_normalize_preserves_numeric_value(rng):
    e = expression(rng)
    syms = sorted(e.free_symbols, key=str)
    vals = {s: sp.Rational(random.Random(rng.random()).randint(1, 9), 7) for s in syms}
    before = complex(sp.N(e.subs(vals), 30))
    after = complex(sp.N(normalize(e).subs(vals), 30))
    assert abs(before - after) <= 1e-12 * max(1.0, abs(before))


def test_jets_collects_atoms():
    e = P("u*u[1;-1] + exp(u[0;2])")
    assert {a.name for a in jets(e)} == {"u[0;0]", "u[1;-1]", "u[0;2]"}

import pytest
import sympy as sp

from ddnoether.calculus import DivergencePair, shift, total_derivative
from ddnoether.expr import Context, ExprError, normalize, parse
from ddnoether.symmetry import EvolutionaryField, VectorField
from ddnoether.variational import (EXACT, ON_SOLUTIONS, UNVERIFIED, ConservationLaw, Lagrangian,
                                   equivalent_laws, euler_lagrange, is_variational_symmetry,
                                   noether, verify_best, verify_cl)

C = Context(["t"], ["n"], ["u"])
PC = Context(["t"], ["n"], ["u"], parameters=["b", "c"], positive=["a"])


def P(text, ctx=C):
    return parse(text, ctx)


def same(a, b):
    return normalize(a - b) == 0


TODA = Lagrangian.make(P("-u[1;0]^2/2 + exp(u - u[0;1])"), C)
PEND = Lagrangian.make(P("-u[1;0]^2/2 + a*u^2/2 + (b + c*n)*(u[0;1] - u)^2/2", PC), PC)


def Q(text, ctx=C):
    return EvolutionaryField((P(text, ctx),))


class TestEulerLagrange:
    def test_toda(self):
        E = euler_lagrange(TODA).equations
        assert same(E[0], P("u[2;0] + exp(u - u[0;1]) - exp(u[0;-1] - u)"))

    def test_pendulum_verbatim(self):
        E = euler_lagrange(PEND).equations[0]
        want = P("u[2;0] + a*u - (b + c*n)*(u[0;1] - u) + (b + c*(n-1))*(u - u[0;-1])", PC)
        assert same(E, want)

    def test_null_lagrangian(self):
        assert euler_lagrange(Lagrangian.make(P("u[1;0]"), C)).equations == (0,)


class TestVariationalSymmetry:
    @pytest.mark.parametrize("q", ["1", "t", "u[1;0]"])
    def test_toda_symmetries(self, q):
        assert is_variational_symmetry(TODA, Q(q))

    def test_toda_scaling_is_not(self):
        v = is_variational_symmetry(TODA, Q("u"))
        assert not v and v.residues[0] != 0

    def test_regular_vector_field(self):
        # time translation written as a vector field
        assert is_variational_symmetry(TODA, VectorField.make((1,), (0,), C))

    @pytest.mark.parametrize("q", ["cos(a^(1/2)*t)", "sin(a^(1/2)*t)", "u[1;0]"])
    def test_pendulum(self, q):
        assert is_variational_symmetry(PEND, Q(q, PC))


class TestNoether:
    def test_toda_momentum(self):
        cl = noether(TODA, Q("1"))
        assert cl.verified == EXACT
        assert equivalent_laws(cl.P, DivergencePair((P("u[1;0]"),), (P("exp(u[0;-1] - u)"),)), C)

    def test_toda_energy(self):
        cl = noether(TODA, Q("u[1;0]"))
        want = DivergencePair((P("u[1;0]^2/2 + exp(u - u[0;1])"),), (P("u[1;0]*exp(u[0;-1] - u)"),))
        assert equivalent_laws(cl.P, want, C, cl.system)
        assert verify_cl(cl).verified == EXACT

    def test_pendulum_cosine(self):
        cl = noether(PEND, Q("cos(a^(1/2)*t)", PC))
        want = DivergencePair(
            (P("cos(a^(1/2)*t)*u[1;0] + a^(1/2)*sin(a^(1/2)*t)*u", PC),),
            (P("-cos(a^(1/2)*t)*(b + c*(n-1))*(u - u[0;-1])", PC),))
        assert equivalent_laws(cl.P, want, PC, cl.system)

    def test_identity_holds_for_returned_law(self):
        cl = noether(TODA, Q("t"))
        assert verify_cl(cl, "identity").verified == EXACT


class TestVerify:
    def volterra_law(self, p1, p2, q):
        from ddnoether.symmetry import DDESystem, SolvedForm
        sys_ = DDESystem(C, (P("u[1;0]/u - u[0;1] + u[0;-1]"),),
                         [SolvedForm.make(C.jet("u", (1,), (0,)), P("u*(u[0;1] - u[0;-1])"))])
        return ConservationLaw(DivergencePair((P(p1),), (P(p2),)), (P(q),), sys_)

    def test_exact(self):
        assert verify_cl(self.volterra_law("u", "-u*u[0;-1]", "u")).verified == EXACT

    def test_zero_law(self):
        assert verify_cl(self.volterra_law("0", "0", "0")).verified == EXACT

    def test_on_solutions_only(self):
        # declared without its characteristic, so only the on-solutions check can pass
        out = verify_best(self.volterra_law("ln(u)", "-u - u[0;-1]", "0"))
        assert out.verified == ON_SOLUTIONS

    def test_failure_reports_residue(self):
        out = verify_best(self.volterra_law("u", "u*u[0;-1]", "u"))
        assert out.verified == UNVERIFIED and out.residue != 0

    def test_unknown_mode(self):
        with pytest.raises(ExprError):
            verify_cl(self.volterra_law("u", "0", "1"), "sometimes")

    def test_arity_checked(self):
        cl = self.volterra_law("u", "0", "1")
        bad = ConservationLaw(cl.P, (1, 1), cl.system)
        with pytest.raises(ExprError):
            verify_cl(bad)


def test_equivalence_modulo_the_equation():
    sys_ = TestVerify().volterra_law("u", "0", "1").system
    F = sys_.equations[0]
    base = DivergencePair((P("u"),), (P("-u*u[0;-1]"),))
    # a flux that vanishes on solutions is trivial of the first kind
    shifted = base + DivergencePair((normalize(P("t*u^2") * F),), (sp.Integer(0),))
    assert equivalent_laws(base, shifted, C, sys_)
    logu = DivergencePair((P("ln(u)"),), (P("-u - u[0;-1]"),))
    v = equivalent_laws(base, logu, C, sys_)
    assert not v and v.residues[0] != 0


def test_equivalence_up_to_trivial_law():
    # (S g - g, -D_t g) has identically vanishing divergence
    g = P("u*u[0;1]")
    base = DivergencePair((P("u"),), (P("-u*u[0;-1]"),))
    triv = DivergencePair((normalize(shift(g, (1,), C) - g),), (normalize(-total_derivative(g, 0, C)),))
    assert equivalent_laws(base, base + triv, C)
    assert not equivalent_laws(base, base + DivergencePair((P("u"),), (sp.Integer(0),)), C)

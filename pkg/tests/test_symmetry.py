import pytest
import sympy as sp

from ddnoether.calculus import frechet
from ddnoether.expr import Context, ExprError, normalize, parse
from ddnoether.symmetry import (DDESystem, EvolutionaryField, SolvedForm, VectorField,
                                check_symmetry, decompose_symmetry, determining_equations,
                                lie_bracket, prolong_apply, reduce_mod, solve_linear_ansatz,
                                solve_point, to_evolutionary)

C = Context(["t"], ["n"], ["u"])
U = C.base("u")
T, N = C.xs[0], C.ns[0]


def P(text, ctx=C):
    return parse(text, ctx)


def volterra():
    return DDESystem(C, (P("u[1;0]/u - u[0;1] + u[0;-1]"),),
                     [SolvedForm.make(C.jet("u", (1,), (0,)), P("u*(u[0;1] - u[0;-1])"))])


def same(a, b):
    return normalize(a - b) == 0


class TestToEvolutionary:
    def test_scaling(self):
        Q = to_evolutionary(VectorField.make((-T,), (U,), C), C)
        assert same(Q.Q[0], P("u + t*u[1;0]"))

    def test_time_translation(self):
        assert same(to_evolutionary(VectorField.make((1,), (0,), C), C).Q[0], P("-u[1;0]"))

    def test_n_dependent_xi_rejected(self):
        X2 = VectorField.make(((-1) ** N * T,), ((-1) ** N * U,), C)
        assert X2.kind == "point"
        with pytest.raises(ExprError, match="not regular"):
            to_evolutionary(X2, C)


class TestProlongation:
    def test_identity_on_base(self):
        Q = EvolutionaryField((P("u[0;1]*exp(u[1;0])"),))
        assert same(prolong_apply(Q, U, C), Q.Q[0])

    def test_shifted_atom(self):
        Q = EvolutionaryField((P("u*u[1;0] + t"),))
        assert same(prolong_apply(Q, C.jet("u", (0,), (1,)), C), P("u[0;1]*u[1;1] + t"))

    def test_general_point_ansatz_matches_hand_expansion(self):
        xi = sp.Function("xi")(T, N, U)
        phi = sp.Function("phi")(T, N, U)
        X = VectorField((xi,), (phi,), "point")
        sys_ = volterra()
        F = sys_.equations[0]
        got = reduce_mod(prolong_apply(X, F, C, "caseI"), sys_)
        up, um = C.jet("u", (0,), (1,)), C.jet("u", (0,), (-1,))
        w = up - um
        Sphi = phi.subs({N: N + 1, U: up}, simultaneous=True)
        Smphi = phi.subs({N: N - 1, U: um}, simultaneous=True)
        want = (-(phi / U) * w + sp.diff(phi, T) / U + sp.diff(phi, U) * w
                - (sp.diff(xi, T) + sp.diff(xi, U) * U * w) * w - Sphi + Smphi)
        assert same(got, want)

    def test_cases_agree_for_regular_fields(self):
        X = VectorField.make((T ** 2,), (P("u*t + (-1)^n"),), C)
        e = P("u[1;1]*u[2;-1] + exp(u[0;2])")
        vals = {m: prolong_apply(X, e, C, m) for m in ("regular", "caseI", "caseII")}
        assert same(vals["regular"], vals["caseI"]) and same(vals["regular"], vals["caseII"])

    def test_unknown_mode(self):
        with pytest.raises(ExprError):
            prolong_apply(EvolutionaryField((U,)), U, C, "caseIII")


class TestReduce:
    def test_second_derivative(self):
        s = volterra()
        got = reduce_mod(C.jet("u", (2,), (0,)), s)
        u1, um = C.jet("u", (0,), (1,)), C.jet("u", (0,), (-1,))
        u2, um2 = C.jet("u", (0,), (2,)), C.jet("u", (0,), (-2,))
        rhs = U * (u1 - um)
        want = rhs * (u1 - um) + U * (u1 * (u2 - U) - um * (U - um2))
        assert same(got, want)

    def test_shifted_solved_form(self):
        assert same(reduce_mod(C.jet("u", (1,), (1,)), volterra()), P("u[0;1]*(u[0;2] - u)"))

    def test_missing_solved_form(self):
        with pytest.raises(ExprError, match="missing solved form"):
            reduce_mod(U, DDESystem(C, (P("u[1;0] - u[0;1]"),)))

    def test_depth_guard(self):
        bad = DDESystem(C, (P("u[1;0] - u[0;1]"),),
                        [SolvedForm.make(C.jet("u", (1,), (0,)), P("u[0;1]"))])
        with pytest.raises(ExprError, match="did not terminate"):
            reduce_mod(C.jet("u", (3,), (0,)), bad, depth=2)

    def test_discrete_kdv_two_leads(self):
        c = Context([], ["m", "n"], ["u"], functions={"a": ("m",), "b": ("n",)})
        F = parse("u[;1,0] - u[;0,1] - (a(m) - b(n))/(u - u[;1,1])", c)
        fwd = SolvedForm.make(c.jet("u", (), (1, 1)), parse("u - (a(m)-b(n))/(u[;1,0]-u[;0,1])", c))
        s = DDESystem(c, (F,), [fwd])
        assert reduce_mod(F, s) == 0
        assert c.jet("u", (), (2, 2)) not in reduce_mod(c.jet("u", (), (2, 2)), s).free_symbols


class TestCheckSymmetry:
    def test_scaling_is_symmetry(self):
        assert check_symmetry(volterra(), VectorField.make((-T,), (U,), C), "caseI")

    def test_unknown_function_of_n(self):
        c3 = sp.Function("c3")(N)
        assert check_symmetry(volterra(), VectorField((c3,), (sp.Integer(0),), "point"), "caseII")

    def test_u_scaling_alone_fails(self):
        v = check_symmetry(volterra(), EvolutionaryField((U,)))
        assert not v
        assert same(v.residues[0], P("-u[0;1] + u[0;-1]"))

    def test_parity_field_under_both_cases(self):
        X2 = VectorField(((-1) ** N * T,), ((-1) ** N * U,), "point")
        assert check_symmetry(volterra(), X2, "caseI")
        assert check_symmetry(volterra(), X2, "caseII")


class TestBracket:
    def test_constant_and_time_derivative(self):
        assert lie_bracket(EvolutionaryField((1,)), EvolutionaryField((P("u[1;0]"),)), C).Q == (0,)

    def test_time_derivative_and_scaling(self):
        # pr X1(u + t u') - pr X2(u') = (u' + t u'') - (2 u' + t u'')
        b = lie_bracket(EvolutionaryField((P("u[1;0]"),)), EvolutionaryField((P("u + t*u[1;0]"),)), C)
        assert same(b.Q[0], P("-u[1;0]"))

    def test_closure_on_volterra(self):
        s = volterra()
        Q1 = EvolutionaryField((P("u + t*u[1;0]"),))
        Q2 = EvolutionaryField((P("u*(u[0;1] - u[0;-1])"),))
        assert check_symmetry(s, Q1) and check_symmetry(s, Q2)
        assert check_symmetry(s, lie_bracket(Q1, Q2, C))


class TestDecomposition:
    def test_zero_field(self):
        d = decompose_symmetry(volterra(), EvolutionaryField((0,)))
        assert d.coefficients == ((),)

    def test_linear_equation(self):
        s = DDESystem(C, (P("u[1;0] - u[0;1]"),),
                      [SolvedForm.make(C.jet("u", (1,), (0,)), P("u[0;1]"))])
        d = decompose_symmetry(s, EvolutionaryField((U,)))
        assert d.coefficients == (((1, (0,), (0,), 0),),)

    def test_volterra_scaling(self):
        d = decompose_symmetry(volterra(), EvolutionaryField((P("u + t*u[1;0]"),)))
        got = {(J1, J2): K for K, J1, J2, _ in d.coefficients[0]}
        assert got == {((0,), (0,)): 1, ((1,), (0,)): T}

    def test_regular_field_cancels_time_part(self):
        d = decompose_symmetry(volterra(), VectorField.make((-T,), (U,), C))
        assert d.coefficients == (((1, (0,), (0,), 0),),)


class TestDeterminingEquations:
    def test_volterra_stages(self):
        de = determining_equations(volterra())
        labels = [lab for lab, _, _ in de.stages]
        assert labels[0] == "mixed"
        assert "xi independent of" in de.stages[0][2]
        assert "polynomial of degree < 2" in de.stages[1][2]
        assert len(de.conditions) > 0

    def test_volterra_solution(self):
        ps = solve_point(volterra())
        assert ps.solution.consistent
        assert len(ps.generators) == 2 and len(ps.free) == 1
        want = [VectorField.make((-T,), (U,), C),
                VectorField(((-1) ** N * T,), ((-1) ** N * U,), "point")]
        for X in want:
            assert any(all(same(a, b) for a, b in zip(X.xi + X.phi, G.xi + G.phi))
                       for G in ps.generators)
        F = ps.free[0]
        assert F.phi == (0,) and F.xi[0].func.__name__.startswith(("xi", "c"))

    def test_linear_shift_equation(self):
        s = DDESystem(C, (P("u[1;0] - u[0;1]"),),
                      [SolvedForm.make(C.jet("u", (1,), (0,)), P("u[0;1]"))])
        ansatz = VectorField((sp.Symbol("k"),), (sp.Symbol("c") * U,), "point")
        assert list(determining_equations(s, ansatz)) == []
        assert check_symmetry(s, VectorField.make((1,), (P("2*u"),), C))

    def test_second_order_rejected(self):
        s = DDESystem(C, (P("u[2;0] - exp(u[0;-1] - u) + exp(u - u[0;1])"),),
                      [SolvedForm.make(C.jet("u", (2,), (0,)), P("exp(u[0;-1] - u) - exp(u - u[0;1])"))])
        with pytest.raises(ExprError, match="not first-order scalar"):
            determining_equations(s)


class TestLinearAnsatz:
    def test_empty_conditions_keep_everything(self):
        a, b = sp.symbols("a b")
        sol = solve_linear_ansatz([], [a, b], C)
        assert sol.consistent and sol.dimension == 2

    def test_inconsistent(self):
        c = sp.Symbol("c")
        assert not solve_linear_ansatz([c, c - 1], [c], C).consistent

    def test_parity_carrier_split(self):
        a0, a1 = sp.symbols("a0 a1")
        sol = solve_linear_ansatz([a0 + a1 * (-1) ** N + a1], [a0, a1], C)
        assert sol.consistent and sol.dimension == 0

    def test_nonlinear_rejected(self):
        a = sp.Symbol("a")
        with pytest.raises(ExprError, match="nonlinear"):
            solve_linear_ansatz([a ** 2 - 1], [a], C)


def test_frechet_agrees_with_prolongation_on_volterra():
    F = volterra().equations[0]
    Q = P("u*(u[0;1] - u[0;-1])")
    assert same(prolong_apply(EvolutionaryField((Q,)), F, C), frechet((F,), (Q,), C)[0])

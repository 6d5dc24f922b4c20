"""Vector fields, prolongations, reduction modulo a system, and point-symmetry solving."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

from .calculus import _adj, _ds, _sh, _td
from .expr import Context, ExprError, Jet, fold_parity, jet_order, jets, normalize

__all__ = [
    "VectorField",
    "EvolutionaryField",
    "SolvedForm",
    "DDESystem",
    "Verdict",
    "ProlongedField",
    "SymmetryDecomposition",
    "DeterminingEquations",
    "LinearSolution",
    "PointSymmetries",
    "to_evolutionary",
    "prolong_apply",
    "reduce_mod",
    "check_symmetry",
    "lie_bracket",
    "point_ansatz",
    "determining_equations",
    "solve_linear_ansatz",
    "solve_point",
    "decompose",
    "decompose_symmetry",
]

MODES = ("regular", "caseI", "caseII")


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class VectorField:
    """X = xi^i d/dx^i + phi^a d/du^a.

    ``kind`` is inferred when omitted: ``regular`` if every xi^i depends on
    the continuous variables only, ``point`` if xi and phi involve no jet
    beyond u itself, ``generalized`` otherwise.
    """

    xi: tuple
    phi: tuple
    kind: str = ""

    @classmethod
    def make(cls, xi: Sequence, phi: Sequence, ctx: Context, kind: str | None = None):
        xi = tuple(normalize(e) for e in xi)
        phi = tuple(normalize(e) for e in phi)
        if len(xi) != ctx.p1 or len(phi) != ctx.q:
            raise ExprError(f"vector field needs {ctx.p1} xi and {ctx.q} phi entries")
        inferred = classify_field(xi, phi, ctx)
        if kind and kind != inferred:
            if kind == "regular" and inferred != "regular":
                raise ExprError("not regular: xi depends on n or [u]")
            if kind == "point" and inferred == "generalized":
                raise ExprError("not a point field: coefficients involve derivatives or shifts")
        return cls(xi, phi, kind or inferred)

    def is_regular(self, ctx: Context) -> bool:
        return all(_only_continuous(x, ctx) for x in self.xi)


@dataclass(frozen=True)
class EvolutionaryField:
    """Q^a d/du^a (all xi zero)."""

    Q: tuple

    @classmethod
    def make(cls, Q: Sequence, ctx: Context | None = None, fields: Sequence[str] | None = None):
        Q = tuple(normalize(e) for e in Q)
        if ctx is not None:
            want = len(fields) if fields is not None else ctx.q
            if len(Q) != want:
                raise ExprError(f"characteristic needs {want} entries, got {len(Q)}")
        return cls(Q)


def _only_continuous(e, ctx: Context) -> bool:
    e = sp.sympify(e)
    if jets(e):
        return False
    return not (e.free_symbols & set(ctx.ns))


def classify_field(xi, phi, ctx: Context) -> str:
    if all(_only_continuous(x, ctx) for x in xi):
        return "regular"
    base = {ctx.base(f) for f in ctx.dependent}
    for e in tuple(xi) + tuple(phi):
        if not jets(e) <= base:
            return "generalized"
    return "point"


@dataclass(frozen=True)
class SolvedForm:
    """``lead = rhs`` with the eliminated direction.

    ``orient[j]`` is +1/-1 when atoms whose j-th shift lies beyond the lead
    (in that direction) are eliminated, 0 when every shift in n_j is.
    """

    lead: Jet
    rhs: sp.Expr
    orient: tuple

    @classmethod
    def make(cls, lead: Jet, rhs, orient: Sequence[int] | None = None):
        if orient is None:
            if any(lead.deriv):
                orient = (0,) * len(lead.shift)
            else:
                orient = tuple(int(sp.sign(s)) for s in lead.shift)
        orient = tuple(int(o) for o in orient)
        if not any(lead.deriv) and not any(orient):
            raise ExprError(f"solved form for {lead.name} eliminates nothing safely;"
                            " give an orientation")
        rhs = normalize(rhs)
        sf = cls(lead, rhs, orient)
        bad = [a for a in jets(rhs, [lead.field]) if sf.covers(a)]
        if bad:
            raise ExprError(f"rhs of {lead.name} contains eliminable atom {bad[0].name}")
        return sf

    def covers(self, a: Jet) -> bool:
        l = self.lead
        if a.field != l.field:
            return False
        if any(d < d0 for d, d0 in zip(a.deriv, l.deriv)):
            return False
        for o, s, s0 in zip(self.orient, a.shift, l.shift):
            if o and o * (s - s0) < 0:
                return False
        return True


@dataclass
class DDESystem:
    ctx: Context
    equations: tuple
    solved_forms: list = field(default_factory=list)
    direction: str = "differential"
    names: tuple = ()

    def __post_init__(self):
        self.equations = tuple(normalize(F) for F in self.equations)
        if not self.names:
            self.names = tuple(f"F{k + 1}" for k in range(len(self.equations)))
        if self.solved_forms and all(not any(sf.lead.deriv) for sf in self.solved_forms):
            self.direction = "difference"

    def eliminator(self, a: Jet) -> SolvedForm | None:
        for sf in self.solved_forms:
            if sf.covers(a):
                return sf
        return None

    def equation_of(self, sf: SolvedForm) -> int:
        """Index of the equation the solved form was taken from."""
        for k, F in enumerate(self.equations):
            if sf.lead in jets(F) and normalize(F.xreplace({sf.lead: sf.rhs})) == 0:
                return k
        for k, F in enumerate(self.equations):
            if sf.lead in jets(F):
                return k
        raise ExprError(f"no equation contains the lead {sf.lead.name}")


@dataclass(frozen=True)
class Verdict:
    ok: bool
    residues: tuple = ()
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# evolutionary form and prolongation

def to_evolutionary(X: VectorField, ctx: Context) -> EvolutionaryField:
    """Q^a = phi^a - xi^i u^a_{1_i;0}; only for regular fields."""
    if isinstance(X, EvolutionaryField):
        return X
    if not X.is_regular(ctx):
        raise ExprError("not regular: xi depends on n or [u]")
    Q = []
    for a, f in enumerate(ctx.dependent):
        u = ctx.base(f)
        Q.append(normalize(X.phi[a] - sum((X.xi[i] * u.bumped(i) for i in range(ctx.p1)),
                                          sp.Integer(0))))
    return EvolutionaryField(tuple(Q))


class ProlongedField:
    """Prolongation coefficients phi^a_{J1;J2}, computed on demand.

    regular: D_J1 S_J2 Q + xi^i u_{J1+1_i;J2}
    caseI:   D_J1 (S_J2 phi - xi^i u_{1_i;J2}) + xi^i u_{J1+1_i;J2}
    caseII:  D_J1 S_J2 Q + (S_J2 xi^i) u_{J1+1_i;J2}
    """

    def __init__(self, X, ctx: Context, mode: str = "regular",
                 fields: Sequence[str] | None = None):
        if mode not in MODES:
            raise ExprError(f"unknown prolongation mode {mode!r}")
        self.ctx = ctx
        self.mode = mode
        self.fields = list(ctx.dependent if fields is None else fields)
        if isinstance(X, EvolutionaryField):
            if len(X.Q) != len(self.fields):
                raise ExprError("characteristic arity does not match the fields")
            self.xi = (sp.Integer(0),) * ctx.p1
            self.Q = X.Q
            self.phi = None
        else:
            if mode == "regular" and not X.is_regular(ctx):
                raise ExprError("not regular: xi depends on n or [u]")
            self.xi = X.xi
            self.phi = X.phi
            self.Q = tuple(
                X.phi[a] - sum((X.xi[i] * ctx.base(f).bumped(i) for i in range(ctx.p1)),
                               sp.Integer(0))
                for a, f in enumerate(self.fields))
        self._cache: dict = {}

    def coefficient(self, a: Jet) -> sp.Expr:
        hit = self._cache.get(a)
        if hit is not None:
            return hit
        ctx = self.ctx
        k = self.fields.index(a.field)
        zero_s = ctx.zero_shift
        if self.phi is None or self.mode in ("regular", "caseII"):
            out = _ds(self.Q[k], a.deriv, a.shift, ctx)
            xi = self.xi if self.mode != "caseII" else tuple(_sh(x, a.shift, ctx) for x in self.xi)
        else:
            shifted_base = Jet(a.field, ctx.zero_deriv, a.shift)
            QJ = _sh(self.phi[k], a.shift, ctx) - sum(
                (self.xi[i] * shifted_base.bumped(i) for i in range(ctx.p1)), sp.Integer(0))
            out = _ds(QJ, a.deriv, zero_s, ctx)
            xi = self.xi
        for i in range(ctx.p1):
            if xi[i] != 0:
                out += xi[i] * a.bumped(i)
        self._cache[a] = out
        return out

    def apply_raw(self, e) -> sp.Expr:
        e = sp.sympify(e)
        out = sp.Integer(0)
        for i, x in enumerate(self.xi):
            if x != 0:
                out += x * sp.diff(e, self.ctx.x(i))
        for a in sorted(jets(e, self.fields), key=jet_order):
            out += self.coefficient(a) * sp.diff(e, a)
        return out

    def apply(self, e) -> sp.Expr:
        return normalize(self.apply_raw(e))


def prolong_apply(X, e, ctx: Context, mode: str = "regular",
                  fields: Sequence[str] | None = None) -> sp.Expr:
    """pr X(e) with coefficients only for the atoms of ``e``."""
    return ProlongedField(X, ctx, mode, fields).apply(e)


# ---------------------------------------------------------------------------
# reduction on solutions

def reduce_mod(e, sys: DDESystem, depth: int = 64) -> sp.Expr:
    """Eliminate every atom covered by a solved form, to a fixpoint."""
    if not sys.solved_forms:
        raise ExprError("missing solved form: the system has no lead annotations")
    ctx = sys.ctx
    e = sp.sympify(e)
    cache: dict = {}
    for _ in range(depth):
        rep = {}
        for a in jets(e, ctx.dependent):
            sf = sys.eliminator(a)
            if sf is None:
                continue
            dd = tuple(x - y for x, y in zip(a.deriv, sf.lead.deriv))
            ds = tuple(x - y for x, y in zip(a.shift, sf.lead.shift))
            key = (sf.lead, dd, ds)
            if key not in cache:
                cache[key] = _ds(sf.rhs, dd, ds, ctx)
            rep[a] = cache[key]
        if not rep:
            return normalize(e)
        e = e.xreplace(rep)
    raise ExprError("reduction did not terminate")


def check_symmetry(sys: DDESystem, X, mode: str = "regular") -> Verdict:
    """Linearized symmetry condition pr X(F_a) = 0 on solutions."""
    pr = ProlongedField(X, sys.ctx, mode)
    residues = tuple(reduce_mod(pr.apply_raw(F), sys) for F in sys.equations)
    return Verdict(all(r == 0 for r in residues), residues, mode)


def lie_bracket(X1: EvolutionaryField, X2: EvolutionaryField, ctx: Context,
                fields: Sequence[str] | None = None) -> EvolutionaryField:
    """[X1, X2] with characteristic pr X1(Q2) - pr X2(Q1)."""
    p1 = ProlongedField(X1, ctx, "regular", fields)
    p2 = ProlongedField(X2, ctx, "regular", fields)
    return EvolutionaryField(tuple(normalize(p1.apply_raw(b) - p2.apply_raw(a))
                                   for a, b in zip(X1.Q, X2.Q)))


# ---------------------------------------------------------------------------
# decomposition pr X(F) = sum K D S F

@dataclass(frozen=True)
class SymmetryDecomposition:
    """``coefficients[a]`` lists (K, J1, J2, b): pr X(F_a) = sum K D_J1 S_J2 F_b."""

    coefficients: tuple

    def rows(self):
        return self.coefficients


def _target_for(a: Jet, sys: DDESystem, eq_index: dict):
    sf = sys.eliminator(a)
    dd = tuple(x - y for x, y in zip(a.deriv, sf.lead.deriv))
    ds = tuple(x - y for x, y in zip(a.shift, sf.lead.shift))
    return (dd, ds, eq_index[sf.lead])


def decompose(expr, sys: DDESystem) -> list:
    """Write an expression vanishing on solutions as sum K * D_J1 S_J2 F_b.

    Each eliminable atom is traded for a formal symbol standing for the
    derived/shifted equation whose top atom it is; the resulting function
    of those symbols vanishes at the origin and is split by telescoping.
    Returns [(K, J1, J2, b), ...] ordered from the highest target down.
    """
    ctx = sys.ctx
    expr = normalize(expr)
    if expr == 0:
        return []
    eq_index = {sf.lead: sys.equation_of(sf) for sf in sys.solved_forms}
    targets: dict = {}
    todo = [a for a in jets(expr, ctx.dependent) if sys.eliminator(a)]
    while todo:
        a = todo.pop()
        if a in targets:
            continue
        dd, ds, b = _target_for(a, sys, eq_index)
        T = normalize(_ds(sys.equations[b], dd, ds, ctx))
        targets[a] = (dd, ds, b, T)
        todo.extend(x for x in jets(T, ctx.dependent) if sys.eliminator(x) and x not in targets)
    order = sorted(targets, key=lambda a: (sum(a.deriv), sum(abs(s) for s in a.shift),
                                           jet_order(a)), reverse=True)
    phis = {a: sp.Dummy(f"Phi{k}") for k, a in enumerate(order)}
    e = expr
    for a in order:
        T = targets[a][3]
        Phi = phis[a]
        if sp.diff(T, a, 2) == 0:
            coef = sp.diff(T, a)
            sol = (Phi - T.xreplace({a: 0})) / coef
        else:
            sols = sp.solve(sp.Eq(T, Phi), a, dict=False)
            if len(sols) != 1:
                raise ExprError(f"decomposition failed: cannot isolate {a.name}")
            sol = sols[0]
        e = e.xreplace({a: sol})
    e = sp.cancel(sp.together(e))
    at0 = sp.cancel(e.xreplace({phis[a]: 0 for a in order}))
    if normalize(at0) != 0:
        raise ExprError(f"decomposition failed: residue {at0}")
    out = []
    back = {phis[a]: targets[a][3] for a in order}
    prev = e
    for k, a in enumerate(order):
        nxt = prev.xreplace({phis[a]: 0})
        K = sp.cancel((prev - nxt) / phis[a])
        prev = nxt
        K = normalize(K.xreplace(back))
        if K != 0:
            dd, ds, b, _ = targets[a]
            out.append((K, dd, ds, b))
    recon = sum((K * _ds(sys.equations[b], dd, ds, ctx) for K, dd, ds, b in out), sp.Integer(0))
    if normalize(recon - expr) != 0:
        raise ExprError("decomposition failed: reconstruction mismatch")
    return out


def decompose_symmetry(sys: DDESystem, X, mode: str = "regular") -> SymmetryDecomposition:
    pr = ProlongedField(X, sys.ctx, mode)
    rows = []
    for F in sys.equations:
        rows.append(tuple(decompose(pr.apply(F), sys)))
    return SymmetryDecomposition(tuple(rows))


# ---------------------------------------------------------------------------
# determining equations for point symmetries

def point_ansatz(ctx: Context, xi_name: str = "xi", phi_name: str = "phi") -> VectorField:
    args = ctx.xs + ctx.ns + [ctx.base(f) for f in ctx.dependent]
    xi = tuple(sp.Function(xi_name if ctx.p1 == 1 else f"{xi_name}{i + 1}")(*args)
               for i in range(ctx.p1))
    phi = tuple(sp.Function(phi_name if ctx.q == 1 else f"{phi_name}{a + 1}")(*args)
                for a in range(ctx.q))
    return VectorField(xi, phi, "point")


@dataclass
class DeterminingEquations:
    """Staged determining system.

    ``stages`` records (label, conditions, conclusion) in order; ``ansatz``
    is the vector field after every conclusion was applied; ``conditions``
    is the final polynomial split.
    """

    stages: list
    ansatz: VectorField
    conditions: list
    functions: dict

    def __iter__(self):
        for _, conds, _ in self.stages:
            yield from conds
        yield from self.conditions

    def __len__(self):
        return sum(len(c) for _, c, _ in self.stages) + len(self.conditions)


def _calls(e) -> set:
    return {c for c in sp.sympify(e).atoms(AppliedUndef)}


def _jet_calls(e) -> set:
    return {c for c in _calls(e) if any(isinstance(x, Jet) for x in c.args)}


def _strip(cond) -> sp.Expr:
    """Drop factors that carry no unknown function (numbers, jets, variables)."""
    cond = sp.factor(cond)
    keep = sp.Integer(1)
    for f in sp.Mul.make_args(cond):
        if f.atoms(AppliedUndef) or f.atoms(sp.Derivative):
            keep *= f
    return keep


def _numerator(e) -> sp.Expr:
    num, _ = sp.fraction(sp.cancel(sp.together(e)))
    return sp.expand(num)


def _split(e, gens: list) -> list:
    if not gens:
        return [e] if e != 0 else []
    try:
        poly = sp.Poly(e, *gens)
    except sp.PolynomialError as exc:
        raise ExprError("cannot split: unshifted unknowns entangled") from exc
    return [c for c in poly.coeffs() if normalize(c) != 0]


def _slot_conclusion(cond, ctx: Context):
    """Recognise c * d^m f/dw^m with w a jet slot of f; returns (f name, slot, m)."""
    c = _strip(cond)
    derivs = [f for f in sp.Mul.make_args(c) if isinstance(f, sp.Derivative)]
    rest = [f for f in sp.Mul.make_args(c) if not isinstance(f, sp.Derivative)]
    if len(derivs) != 1 or any(f.atoms(AppliedUndef) for f in rest):
        return None
    d = derivs[0]
    if not isinstance(d.expr, AppliedUndef) or len(d.variable_count) != 1:
        return None
    (w, m), = d.variable_count
    if not isinstance(w, Jet):
        return None
    slots = [k for k, x in enumerate(d.expr.args) if x == w]
    if len(slots) != 1:
        return None
    return d.expr.func.__name__, slots[0], int(m)


def _fresh_names(ctx: Context, taken: set, k: int) -> list:
    out = []
    pool = [chr(c) for c in range(ord("a"), ord("z") + 1)]
    used = set(ctx.continuous + ctx.discrete + ctx.fields + ctx.parameters
               + list(ctx.functions)) | taken
    for name in pool:
        if name not in used:
            out.append(name)
            used.add(name)
            if len(out) == k:
                return out
    raise ExprError("ran out of fresh function names")


def _restrict(ansatz: VectorField, fname: str, slot: int, m: int, ctx: Context,
              functions: dict):
    """Replace f(..., w, ...) by a polynomial of degree < m in the slot variable."""
    args = functions[fname]
    w = args[slot]
    rest = tuple(x for k, x in enumerate(args) if k != slot)
    if m == 1:
        new = {fname: rest}
        body = sp.Function(fname)(*rest)
    else:
        names = _fresh_names(ctx, set(functions), m)
        new = {nm: rest for nm in names}
        # highest power first: f = a*w + b for m = 2
        body = sum((sp.Function(nm)(*rest) * w ** (m - 1 - k) for k, nm in enumerate(names)),
                   sp.Integer(0))
    lam = sp.Lambda(args, body)

    def sub(e):
        return e.replace(lambda c: isinstance(c, AppliedUndef) and c.func.__name__ == fname
                         and len(c.args) == len(args), lambda c: lam(*c.args)).doit()

    functions = {k: v for k, v in functions.items() if k != fname}
    functions.update(new)
    X = VectorField(tuple(normalize(sub(x)) for x in ansatz.xi),
                    tuple(normalize(sub(p)) for p in ansatz.phi), "point")
    desc = f"{fname} polynomial of degree < {m} in {w}" if m > 1 else f"{fname} independent of {w}"
    return X, functions, desc


def determining_equations(sys: DDESystem, ansatz: VectorField | None = None,
                          mode: str = "caseI", max_rounds: int = 8) -> DeterminingEquations:
    """Split the reduced linearized symmetry condition of u' = f(shifts of u)."""
    ctx = sys.ctx
    if ctx.q != 1 or ctx.p1 != 1 or len(sys.equations) != 1 or len(sys.solved_forms) != 1:
        raise ExprError("pre violated: not first-order scalar")
    lead = sys.solved_forms[0].lead
    if lead.deriv != (1,) or any(lead.shift):
        raise ExprError("pre violated: not first-order scalar")
    if any(a.order for a in jets(sys.solved_forms[0].rhs)):
        raise ExprError("pre violated: not first-order scalar")
    if ansatz is None:
        ansatz = point_ansatz(ctx)
    functions = {}
    for e in ansatz.xi + ansatz.phi:
        for c in _calls(e):
            functions[c.func.__name__] = c.args
    stages = []
    F = sys.equations[0]
    for _ in range(max_rounds):
        R = reduce_mod(ProlongedField(ansatz, ctx, mode).apply_raw(F), sys)
        N = _numerator(R)
        tangled = _jet_calls(N)
        if not tangled:
            break
        shifted = sorted({x for c in tangled for x in c.args
                          if isinstance(x, Jet) and any(x.shift)}, key=jet_order)
        concluded = False
        # mixed derivative across two shifted atoms on opposite sides
        pos = [a for a in shifted if a.shift[0] > 0]
        neg = [a for a in shifted if a.shift[0] < 0]
        candidates = []
        if pos and neg:
            candidates.append(("mixed", sp.diff(N, pos[0], neg[0])))
        for s in shifted:
            hidden = {c: sp.Dummy() for c in _calls(N) if s in c.args}
            hidden.update({d: sp.Dummy() for d in N.atoms(sp.Derivative)
                           if s in d.expr.args})
            plain = N.xreplace(hidden)
            try:
                deg = sp.Poly(plain, s).degree()
            except sp.PolynomialError as exc:
                raise ExprError("cannot split: unshifted unknowns entangled") from exc
            candidates.append((f"d^{deg + 1}/d{s.name}", sp.diff(N, s, deg + 1)))
        for label, M in candidates:
            M = sp.expand(M)
            if M == 0:
                continue
            gens = sorted({a for a in jets(M) if any(a.shift)}
                          - {x for c in _jet_calls(M) for x in c.args}, key=jet_order)
            conds = [_strip(c) for c in _split(M, gens)]
            conds = [c for c in conds if c != 0]
            for c in conds:
                hit = _slot_conclusion(c, ctx)
                if hit is None:
                    continue
                fname, slot, m = hit
                if fname not in functions:
                    continue
                ansatz, functions, desc = _restrict(ansatz, fname, slot, m, ctx, functions)
                stages.append((label, conds, desc))
                concluded = True
                break
            if concluded:
                break
        if not concluded:
            raise ExprError("cannot split: unshifted unknowns entangled")
    else:
        raise ExprError("cannot split: too many restriction rounds")
    gens = sorted(jets(N), key=jet_order)
    final = [normalize(c) for c in _split(N, gens)]
    return DeterminingEquations(stages, ansatz, final, functions)


# ---------------------------------------------------------------------------
# linear solving over carriers

@dataclass
class LinearSolution:
    consistent: bool
    unknowns: tuple
    particular: dict
    basis: list
    free_functions: list

    @property
    def dimension(self) -> int:
        return len(self.basis) + len(self.free_functions)


def _parity_symbols(e, ctx: Context):
    rep = {}
    for j, n in enumerate(ctx.ns):
        rep[sp.Pow(-1, n, evaluate=False)] = sp.Dummy(f"P{j}")
    return rep


def solve_linear_ansatz(conds: Sequence, unknowns: Sequence, ctx: Context,
                        functions: Sequence = ()) -> LinearSolution:
    """Solve conditions that are linear in ``unknowns`` for all t, n.

    Each condition is split over the carriers (monomials in the continuous
    and discrete variables and in (-1)^n); functions listed in
    ``functions`` that no longer occur are reported as free.
    """
    unknowns = list(unknowns)
    uset = set(unknowns)
    eqs = []
    for c in conds:
        c = fold_parity(sp.expand(sp.sympify(c)))
        if c == 0:
            continue
        rep = _parity_symbols(c, ctx)
        c = c.xreplace(rep)
        carriers = [s for s in ctx.xs + ctx.ns if c.has(s)] + [d for d in rep.values() if c.has(d)]
        try:
            poly = sp.Poly(c, *(carriers + unknowns))
        except sp.PolynomialError as exc:
            raise ExprError("cannot split on carriers") from exc
        groups: dict = {}
        for mon, coeff in poly.terms():
            cm, um = mon[:len(carriers)], mon[len(carriers):]
            if sum(um) > 1:
                raise ExprError("nonlinear in unknowns")
            term = coeff
            for u, k in zip(unknowns, um):
                term *= u ** k
            groups[cm] = groups.get(cm, 0) + term
        for g in groups.values():
            if g.free_symbols & set(ctx.xs + ctx.ns):
                raise ExprError("cannot split on carriers")
            eqs.append(g)
    free = []
    for f in functions:
        if not any(sp.sympify(c).has(f) for c in conds):
            free.append(f)
    if not unknowns:
        ok = all(normalize(e) == 0 for e in eqs)
        return LinearSolution(ok, (), {}, [], free if ok else [])
    if not eqs:
        basis = [{u: sp.Integer(1 if u == w else 0) for u in unknowns} for w in unknowns]
        return LinearSolution(True, tuple(unknowns), {u: sp.Integer(0) for u in unknowns},
                              basis, free)
    A, b = sp.linear_eq_to_matrix(eqs, unknowns)
    try:
        sol, params = A.gauss_jordan_solve(b)
    except ValueError:
        return LinearSolution(False, tuple(unknowns), {}, [], [])
    zero = {p: 0 for p in params}
    particular = {u: sp.simplify(sol[k].xreplace(zero)) for k, u in enumerate(unknowns)}
    basis = []
    for p in params:
        vec = {u: sp.simplify(sp.diff(sol[k], p)) for k, u in enumerate(unknowns)}
        basis.append(vec)
    return LinearSolution(True, tuple(unknowns), particular, basis, free)


# ---------------------------------------------------------------------------
# point symmetries end to end

@dataclass
class PointSymmetries:
    generators: list           # VectorFields spanning the constant-coefficient part
    free: list                 # VectorFields carrying surviving free functions
    general: VectorField       # xi, phi with constants c1, c2, ... and free functions
    determining: DeterminingEquations
    solution: LinearSolution

    @property
    def all_generators(self) -> list:
        return self.generators + self.free


def _carrier_terms(ctx: Context, with_const: bool = True) -> list:
    out = []
    for tpow in (0, 1):
        for par in (0, 1):
            if not with_const and tpow == 0:
                continue
            term = sp.Integer(1)
            for x in ctx.xs:
                term *= x ** tpow
            for n in ctx.ns:
                term *= sp.Pow(-1, n) ** par
            out.append(term)
    return out


def solve_point(sys: DDESystem, mode: str = "caseI") -> PointSymmetries:
    """Point symmetries of u' = f(...) under the carrier ansatz {1, t, (-1)^n, t(-1)^n}.

    A function entering the final conditions only through t-derivatives is
    taken as g0(n) + t*(k0 + k1 (-1)^n); g0 is then a free function if it
    stays unconstrained.  Every other function is a constant combination of
    the four carriers.
    """
    ctx = sys.ctx
    det = determining_equations(sys, mode=mode)
    t = ctx.x(0)
    n = ctx.n(0)
    consts = []
    free_fns = []
    bodies = {}
    for name in sorted(det.functions):
        args = det.functions[name]
        calls = [c for cond in det.conditions for c in _calls(cond) if c.func.__name__ == name]
        derivs = [d for cond in det.conditions for d in sp.sympify(cond).atoms(sp.Derivative)
                  if isinstance(d.expr, AppliedUndef) and d.expr.func.__name__ == name]
        inside = {d.expr for d in derivs}
        only_dt = all(c in inside for c in calls) and all(
            all(v == t for v, _ in d.variable_count) for d in derivs)
        if only_dt and tuple(args) == (t, n):
            g0 = sp.Function(f"{name}0")(n)
            ks = [sp.Symbol(f"{name}_{k}") for k in range(2)]
            body = g0 + t * (ks[0] + ks[1] * sp.Pow(-1, n))
            free_fns.append(g0)
        else:
            carriers = _carrier_terms(ctx)
            ks = [sp.Symbol(f"{name}_{k}") for k in range(len(carriers))]
            body = sum((k * c for k, c in zip(ks, carriers)), sp.Integer(0))
        consts.extend(ks)
        bodies[name] = sp.Lambda(args, body)

    def sub(e):
        e = sp.sympify(e)
        for name, lam in bodies.items():
            e = e.replace(lambda c, nm=name: isinstance(c, AppliedUndef) and c.func.__name__ == nm
                          and len(c.args) == len(lam.variables), lambda c, lam=lam: lam(*c.args))
        return fold_parity(sp.expand(e.doit()))

    conds = [sub(c) for c in det.conditions]
    # order unknowns so coefficients of phi-side functions end up as free parameters
    order = sorted(consts, key=lambda s: (s.name.split("_")[0] in {"a"}, s.name))
    sol = solve_linear_ansatz(conds, order, ctx, functions=free_fns)
    if not sol.consistent:
        return PointSymmetries([], [], VectorField.make((0,) * ctx.p1, (0,) * ctx.q, ctx),
                               det, sol)
    xi = [sub(x) for x in det.ansatz.xi]
    phi = [sub(p) for p in det.ansatz.phi]
    kill = {g: 0 for g in free_fns}

    def field_from(values: dict, keep=None):
        rep = dict(values)
        xs = [normalize(x.xreplace(rep).replace(
            lambda c: c in kill and c != keep, lambda c: 0)) for x in xi]
        ps = [normalize(p.xreplace(rep).replace(
            lambda c: c in kill and c != keep, lambda c: 0)) for p in phi]
        return VectorField.make(xs, ps, ctx)

    gens = []
    cs = []
    general_vals = dict(sol.particular)
    for k, vec in enumerate(sol.basis):
        gens.append(field_from({u: vec[u] for u in order}))
        c = sp.Symbol(f"c{k + 1}")
        cs.append(c)
        for u in order:
            general_vals[u] = general_vals.get(u, 0) + c * vec[u]
    free_fields = []
    renamed = {}
    for k, g in enumerate(sol.free_functions):
        zero = {u: sp.Integer(0) for u in order}
        fx = field_from(zero, keep=g)
        nm = sp.Function(f"c{len(cs) + k + 1}")(*g.args)
        renamed[g] = nm
        free_fields.append(VectorField.make([x.xreplace({g: nm}) for x in fx.xi],
                                            [p.xreplace({g: nm}) for p in fx.phi], ctx))
    gx = [normalize(x.xreplace(general_vals).xreplace(renamed)) for x in xi]
    gp = [normalize(p.xreplace(general_vals).xreplace(renamed)) for p in phi]
    return PointSymmetries(gens, free_fields, VectorField.make(gx, gp, ctx), det, sol)

"""Formal Lagrangians, adjoint systems and self-adjointness.

The auxiliary fields v live in an extended context; conservation laws of
the original system come from the identity
Q.F*(v) - v.pr X(F) = Div(...) after substituting v = f(x, n, [u]).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import sympy as sp

from .calculus import (DivergencePair, by_parts, divergence, euler, frechet_adjoint,
                       null_lagrangian_decompose, _adj, _ds)
from .expr import Context, ExprError, Jet, jets, normalize
from .symmetry import (DDESystem, EvolutionaryField, ProlongedField, SolvedForm, Verdict,
                       decompose, decompose_symmetry, reduce_mod, to_evolutionary)
from .variational import EXACT, ON_SOLUTIONS, ConservationLaw, noether_fluxes

__all__ = [
    "FormalLagrangian",
    "Substitution",
    "formal_lagrangian",
    "adjoint_system",
    "adjoint_via_frechet",
    "aux_context",
    "check_self_adjoint",
    "extend_characteristic",
    "adjoint_cl",
    "candidate_substitutions",
]


@dataclass(frozen=True)
class FormalLagrangian:
    L: sp.Expr
    ctx: Context        # original context plus the auxiliary fields
    origin: DDESystem


def aux_context(ctx: Context) -> Context:
    return ctx.with_auxiliary()


def lift(sys: DDESystem) -> DDESystem:
    """The same system over the context with auxiliary fields."""
    actx = aux_context(sys.ctx)
    if actx is sys.ctx:
        return sys
    return DDESystem(actx, sys.equations, list(sys.solved_forms), sys.direction, sys.names)


def formal_lagrangian(sys: DDESystem) -> FormalLagrangian:
    """L = v^a F_a."""
    actx = aux_context(sys.ctx)
    L = sum((actx.base(v) * F for v, F in zip(actx.auxiliary, sys.equations)), sp.Integer(0))
    return FormalLagrangian(normalize(L), actx, sys)


def adjoint_system(sys: DDESystem) -> tuple:
    """F*_a = E_{u^a}(v^b F_b)."""
    fl = formal_lagrangian(sys)
    return tuple(euler(fl.L, f, fl.ctx) for f in fl.ctx.dependent)


def adjoint_via_frechet(sys: DDESystem) -> tuple:
    actx = aux_context(sys.ctx)
    return frechet_adjoint(sys.equations, [actx.base(v) for v in actx.auxiliary], actx)


@dataclass(frozen=True)
class Substitution:
    """v^a -> f^a(x, n, [u]); shifted and derived v-atoms follow by D_K S_J f."""

    ctx: Context        # context with auxiliary fields
    bindings: tuple     # one expression per auxiliary field

    @classmethod
    def make(cls, ctx: Context, bindings: Mapping[str, object] | Sequence) -> "Substitution":
        actx = aux_context(ctx)
        if isinstance(bindings, Mapping):
            missing = [v for v in actx.auxiliary if v not in bindings]
            if missing:
                raise ExprError(f"substitution leaves {missing} unbound")
            vals = tuple(normalize(bindings[v]) for v in actx.auxiliary)
        else:
            vals = tuple(normalize(b) for b in bindings)
        if len(vals) != len(actx.auxiliary):
            raise ExprError("substitution arity does not match the auxiliary fields")
        for b in vals:
            if jets(b, actx.auxiliary):
                raise ExprError("substitution binding contains auxiliary atoms")
        return cls(actx, vals)

    def closure(self, e) -> dict:
        rep = {}
        for a in jets(e, self.ctx.auxiliary):
            f = self.bindings[self.ctx.auxiliary.index(a.field)]
            rep[a] = _ds(f, a.deriv, a.shift, self.ctx)
        return rep

    def apply_raw(self, e):
        e = sp.sympify(e)
        return e.xreplace(self.closure(e))

    def apply(self, e) -> sp.Expr:
        return normalize(self.apply_raw(e))

    def classify(self) -> str:
        """strict (v = u), quasi (f([u])) or weak (f(x, n, [u]))."""
        ctx = self.ctx
        if all(b == ctx.base(u) for b, u in zip(self.bindings, ctx.dependent)):
            return "strict"
        explicit = set(ctx.xs) | set(ctx.ns)
        for b in self.bindings:
            if b.free_symbols & explicit:
                return "weak"
        return "quasi"


def check_self_adjoint(sys: DDESystem, sub: Substitution) -> Verdict:
    """F*(f) reduces to zero modulo the system."""
    residues = tuple(reduce_mod(sub.apply_raw(e), sys) for e in adjoint_system(sys))
    return Verdict(all(r == 0 for r in residues), residues, sub.classify())


def extend_characteristic(sys: DDESystem, X) -> tuple:
    """Q*^b = -sum (-D)_J1 S_-J2 (v^a K^b_{a;J1,J2})."""
    actx = aux_context(sys.ctx)
    dec = decompose_symmetry(sys, X)
    out = [sp.Integer(0)] * len(sys.equations)
    for a, row in enumerate(dec.coefficients):
        v = actx.base(actx.auxiliary[a])
        for K, J1, J2, b in row:
            out[b] -= _adj(v * K, J1, J2, actx)
    return tuple(normalize(q) for q in out)


def _characteristic_form(P: DivergencePair, E, sys: DDESystem):
    """Turn Div P = E (E vanishing on solutions) into Div P' = Qt.F when possible."""
    ctx = sys.ctx
    try:
        terms = decompose(E, sys)
    except ExprError:
        return None
    bp = by_parts(terms, list(sys.equations), ctx)
    Pc = P - bp.fluxes
    lhs = divergence(Pc, ctx)
    rhs = sum((q * F for q, F in zip(bp.characteristic, sys.equations)), sp.Integer(0))
    if normalize(lhs - rhs) != 0:
        return None
    return Pc, bp.characteristic


def _restrict(P: DivergencePair, sub: Substitution, ctx: Context) -> DivergencePair:
    return DivergencePair(tuple(sub.apply(p) for p in P.p1), tuple(sub.apply(p) for p in P.p2))


def adjoint_cl(sys: DDESystem, X, sub: Substitution, route: str = "remark") -> ConservationLaw:
    """Conservation law of a self-adjoint system from a regular symmetry.

    ``remark``: decompose W = Q.F*(v) - v.pr X(F), an identical divergence
    over (u, v), then substitute v = f.  ``extended``: extend X by Q* and
    apply Noether to the formal Lagrangian.  Falls back from the first to
    the second when the divergence extraction fails.
    """
    ctx = sys.ctx
    char = X if isinstance(X, EvolutionaryField) else to_evolutionary(X, ctx)
    fl = formal_lagrangian(sys)
    actx = fl.ctx
    Fstar = adjoint_system(sys)
    vs = [actx.base(v) for v in actx.auxiliary]
    pr = ProlongedField(char, actx, "regular", actx.dependent)
    if route == "remark":
        W = sum((q * f for q, f in zip(char.Q, Fstar)), sp.Integer(0))
        W -= sum((v * pr.apply_raw(F) for v, F in zip(vs, sys.equations)), sp.Integer(0))
        try:
            Phat = null_lagrangian_decompose(normalize(W), actx)
        except ExprError:
            return adjoint_cl(sys, char, sub, route="extended")
        E_sub = sub.apply(W)
    elif route == "extended":
        Qstar = extend_characteristic(sys, char)
        Phat, _ = noether_fluxes(fl.L, tuple(char.Q) + Qstar, actx, actx.fields)
        E_sub = sub.apply(sum((q * f for q, f in zip(char.Q, Fstar)), sp.Integer(0))
                          + sum((q * F for q, F in zip(Qstar, sys.equations)), sp.Integer(0)))
    else:
        raise ExprError(f"unknown route {route!r}")
    P = DivergencePair(tuple(sub.apply(p) for p in Phat.p1), tuple(sub.apply(p) for p in Phat.p2))
    if normalize(divergence(P, ctx) - E_sub) != 0:
        raise ExprError("adjoint_cl: substituted identity failed")
    got = _characteristic_form(P, E_sub, sys)
    if got is not None:
        Pc, Qt = got
        return ConservationLaw(Pc, tuple(Qt), sys, EXACT)
    res = reduce_mod(divergence(P, ctx), sys)
    if res != 0:
        raise ExprError(f"adjoint_cl: law does not hold on solutions, residue {res}")
    return ConservationLaw(P, (), sys, ON_SOLUTIONS)


def candidate_substitutions(sys: DDESystem) -> list:
    """Heuristic search over v^a = c (-1)^(e.n) u^a with c = +-1.

    Only a convenience: it tries a small family and returns those that pass.
    """
    ctx = sys.ctx
    actx = aux_context(ctx)
    found = []
    parities = list(itertools.product((0, 1), repeat=ctx.p2))
    for sign in (1, -1):
        for par in parities:
            tok = sp.Integer(sign)
            for n, k in zip(ctx.ns, par):
                if k:
                    tok *= sp.Pow(-1, n)
            sub = Substitution.make(ctx, [tok * ctx.base(u) for u in ctx.dependent])
            if check_self_adjoint(sys, sub):
                found.append(sub)
    return found

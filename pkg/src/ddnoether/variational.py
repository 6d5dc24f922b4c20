"""Lagrangians, variational symmetries and the constructive Noether map."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import sympy as sp

from .calculus import (DivergencePair, by_parts, by_parts_terms, divergence, euler,
                       null_lagrangian_decompose, _td)
from .expr import Context, ExprError, normalize
from .symmetry import (DDESystem, EvolutionaryField, ProlongedField, VectorField, Verdict,
                       decompose, reduce_mod, to_evolutionary)

__all__ = [
    "Lagrangian",
    "ConservationLaw",
    "EXACT",
    "ON_SOLUTIONS",
    "UNVERIFIED",
    "euler_lagrange",
    "is_variational_symmetry",
    "noether",
    "noether_fluxes",
    "verify_best",
    "verify_cl",
    "equivalent_laws",
]

EXACT = "exact-identity"
ON_SOLUTIONS = "on-solutions"
UNVERIFIED = "unverified"


@dataclass(frozen=True)
class Lagrangian:
    L: sp.Expr
    ctx: Context

    @classmethod
    def make(cls, L, ctx: Context) -> "Lagrangian":
        return cls(normalize(L), ctx)


@dataclass(frozen=True)
class ConservationLaw:
    """Div P1 + Div^Delta P2 = Q . F (or = 0 on solutions of ``system``)."""

    P: DivergencePair
    Q: tuple
    system: DDESystem | None = None
    verified: str = UNVERIFIED
    residue: sp.Expr = sp.Integer(0)

    def with_verdict(self, verdict: str, residue=sp.Integer(0)) -> "ConservationLaw":
        return replace(self, verified=verdict, residue=residue)


def euler_lagrange(lag: Lagrangian) -> DDESystem:
    """The system (E_a(L)); solved forms are left to the caller."""
    ctx = lag.ctx
    return DDESystem(ctx, tuple(euler(lag.L, f, ctx) for f in ctx.dependent))


def _as_char(X, ctx: Context) -> EvolutionaryField:
    if isinstance(X, EvolutionaryField):
        return X
    return to_evolutionary(X, ctx)


def _variation(lag: Lagrangian, X) -> sp.Expr:
    """pr X(L) + L Div xi for a regular field, pr X(L) for an evolutionary one."""
    ctx = lag.ctx
    if isinstance(X, EvolutionaryField):
        return ProlongedField(X, ctx, "regular").apply_raw(lag.L)
    if not X.is_regular(ctx):
        raise ExprError("not regular: xi depends on n or [u]")
    out = ProlongedField(X, ctx, "regular").apply_raw(lag.L)
    for i, x in enumerate(X.xi):
        out += lag.L * _td(x, i, ctx)
    return out


def is_variational_symmetry(lag: Lagrangian, X) -> Verdict:
    """E_a(pr X(L) + L Div xi) = 0 for every a."""
    ctx = lag.ctx
    V = normalize(_variation(lag, X))
    residues = tuple(euler(V, f, ctx) for f in ctx.dependent)
    return Verdict(all(r == 0 for r in residues), residues, "variational")


def noether_fluxes(L, Q: Sequence, ctx: Context, fields: Sequence[str] | None = None):
    """(P, E) with Div P = sum_a Q^a E_a(L) over ``fields``, checked by expansion.

    N = pr(Q d_u)(L) is a null Lagrangian, N = Div Phat by the homotopy, and
    summing N by parts against Q gives N = Q.E(L) + Div R, hence
    Div(Phat - R) = Q.E(L).
    """
    fields = list(ctx.dependent if fields is None else fields)
    L = normalize(L)
    N = normalize(ProlongedField(EvolutionaryField(tuple(Q)), ctx, "regular", fields).apply_raw(L))
    Phat = null_lagrangian_decompose(N, ctx)
    terms = by_parts_terms(lambda a: sp.diff(L, a), fields, L, ctx)
    bp = by_parts(terms, list(Q), ctx)
    P = Phat - bp.fluxes
    EL = tuple(euler(L, f, ctx) for f in fields)
    rhs = sum((q * e for q, e in zip(Q, EL)), sp.Integer(0))
    residue = normalize(divergence(P, ctx) - rhs)
    if residue != 0:
        raise ExprError(f"noether verification failed, residue {residue}")
    return P, EL


def noether(lag: Lagrangian, X, system: DDESystem | None = None) -> ConservationLaw:
    """Conservation law with characteristic Q from a variational symmetry.

    A regular field is replaced by its evolutionary representative; the
    L*xi flux this would otherwise need cancels in that form.
    """
    ctx = lag.ctx
    char = _as_char(X, ctx)
    P, _ = noether_fluxes(lag.L, char.Q, ctx)
    if system is None:
        system = euler_lagrange(lag)
    return ConservationLaw(P, char.Q, system, EXACT)


def verify_cl(cl: ConservationLaw, mode: str = "identity") -> ConservationLaw:
    """Check Div P = Q.F exactly, or Div P = 0 modulo the system."""
    sys = cl.system
    if sys is None:
        raise ExprError("conservation law has no system attached")
    ctx = sys.ctx
    lhs = divergence(cl.P, ctx)
    if mode == "identity":
        if len(cl.Q) != len(sys.equations):
            raise ExprError("characteristic arity does not match the system")
        rhs = sum((q * F for q, F in zip(cl.Q, sys.equations)), sp.Integer(0))
        res = normalize(lhs - rhs)
        return cl.with_verdict(EXACT if res == 0 else UNVERIFIED, res)
    if mode == "on-solutions":
        res = reduce_mod(lhs, sys)
        return cl.with_verdict(ON_SOLUTIONS if res == 0 else UNVERIFIED, res)
    raise ExprError(f"unknown verification mode {mode!r}")


def verify_best(cl: ConservationLaw) -> ConservationLaw:
    """Exact identity if it holds, otherwise the on-solutions verdict."""
    out = verify_cl(cl, "identity")
    if out.verified == EXACT or not cl.system.solved_forms:
        return out
    return verify_cl(cl, "on-solutions")


def equivalent_laws(P: DivergencePair, Pother: DivergencePair, ctx: Context,
                    system: DDESystem | None = None) -> Verdict:
    """Laws agree up to a trivial one.

    Without a system the divergence of the difference must vanish
    identically.  With one, that divergence is written as Q.F + Div R by
    decomposing it against the equations, and the laws are equivalent when
    the characteristic Q vanishes on solutions.  The residue is the reduced
    characteristic (or the reduced divergence if no decomposition exists).
    """
    d = divergence(P - Pother, ctx)
    if d == 0 or system is None or not system.solved_forms:
        return Verdict(d == 0, (d,), "equivalence")
    try:
        terms = decompose(d, system)
    except ExprError:
        return Verdict(False, (reduce_mod(d, system),), "equivalence")
    bp = by_parts(terms, list(system.equations), ctx)
    res = tuple(reduce_mod(q, system) for q in bp.characteristic)
    return Verdict(all(r == 0 for r in res), res, "equivalence")

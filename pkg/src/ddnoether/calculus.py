"""Differential-difference operator calculus on jet expressions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import sympy as sp

from .expr import Context, ExprError, Jet, jet_order, jets, normalize

__all__ = [
    "ByPartsResult",
    "DivergencePair",
    "HomotopyError",
    "NotNullLagrangian",
    "total_derivative",
    "shift",
    "apply_DS",
    "apply_adjoint_DS",
    "euler",
    "euler_all",
    "frechet",
    "frechet_adjoint",
    "divergence",
    "by_parts",
    "by_parts_terms",
    "null_lagrangian_decompose",
]


class NotNullLagrangian(ExprError):
    pass


class HomotopyError(ExprError):
    pass


@dataclass(frozen=True)
class DivergencePair:
    p1: tuple  # one entry per continuous variable
    p2: tuple  # one entry per discrete variable

    def __add__(self, other: "DivergencePair") -> "DivergencePair":
        return DivergencePair(tuple(normalize(a + b) for a, b in zip(self.p1, other.p1)),
                              tuple(normalize(a + b) for a, b in zip(self.p2, other.p2)))

    def __neg__(self) -> "DivergencePair":
        return DivergencePair(tuple(normalize(-a) for a in self.p1),
                              tuple(normalize(-a) for a in self.p2))

    def __sub__(self, other: "DivergencePair") -> "DivergencePair":
        return self + (-other)

    def map(self, fn) -> "DivergencePair":
        return DivergencePair(tuple(fn(a) for a in self.p1), tuple(fn(a) for a in self.p2))

    @classmethod
    def zero(cls, ctx: Context) -> "DivergencePair":
        return cls((sp.Integer(0),) * ctx.p1, (sp.Integer(0),) * ctx.p2)


@dataclass(frozen=True)
class ByPartsResult:
    characteristic: tuple
    flux_d: tuple
    flux_s: tuple

    @property
    def fluxes(self) -> DivergencePair:
        return DivergencePair(self.flux_d, self.flux_s)


# ---------------------------------------------------------------------------
# raw operators (no normalization; callers normalize once at the end)

def _td(e, i: int, ctx: Context):
    e = sp.sympify(e)
    out = sp.diff(e, ctx.x(i))
    for a in jets(e):
        out += a.bumped(i) * sp.diff(e, a)
    return out


def _sh(e, offsets: Sequence[int], ctx: Context):
    e = sp.sympify(e)
    if not any(offsets):
        return e
    rep = {a: a.shifted(offsets) for a in jets(e)}
    for j, k in enumerate(offsets):
        if k:
            rep[ctx.n(j)] = ctx.n(j) + k
    return e.xreplace(rep)


def _ds(e, deriv: Sequence[int], offsets: Sequence[int], ctx: Context):
    e = _sh(e, offsets, ctx)
    for i, k in enumerate(deriv):
        for _ in range(k):
            e = _td(e, i, ctx)
    return e


def _adj(e, deriv: Sequence[int], offsets: Sequence[int], ctx: Context):
    e = _sh(e, [-k for k in offsets], ctx)
    for i, k in enumerate(deriv):
        for _ in range(k):
            e = -_td(e, i, ctx)
    return e


def _check_i(i: int, ctx: Context):
    if ctx.p1 == 0:
        raise ExprError("no continuous variables: total derivative unavailable")
    if not 0 <= i < ctx.p1:
        raise ExprError(f"continuous-variable index {i} out of range")


# ---------------------------------------------------------------------------
# public operators

def total_derivative(e, i: int, ctx: Context) -> sp.Expr:
    """D_i e: explicit x^i-derivative plus promotion of every jet."""
    _check_i(i, ctx)
    return normalize(_td(e, i, ctx))


def shift(e, offsets: Sequence[int], ctx: Context) -> sp.Expr:
    """S_J e: translate every jet shift index and every explicit discrete variable."""
    if len(offsets) != ctx.p2:
        raise ExprError(f"shift needs {ctx.p2} offsets, got {len(offsets)}")
    return normalize(_sh(e, offsets, ctx))


def apply_DS(e, deriv, offsets, ctx: Context) -> sp.Expr:
    return normalize(_ds(e, deriv, offsets, ctx))


def apply_adjoint_DS(e, deriv, offsets, ctx: Context) -> sp.Expr:
    """(-D)_{J1} S_{-J2} e."""
    return normalize(_adj(e, deriv, offsets, ctx))


def _euler_raw(L, target: str, ctx: Context):
    out = sp.Integer(0)
    for a in sorted(jets(L, [target]), key=jet_order):
        out += _adj(sp.diff(L, a), a.deriv, a.shift, ctx)
    return out


def euler(L, target: str, ctx: Context) -> sp.Expr:
    """E_target(L) = sum (-D)_{J1} S_{-J2} dL/d target_{J1;J2}."""
    if target not in ctx.fields:
        raise ExprError(f"unknown field {target!r}")
    return normalize(_euler_raw(sp.sympify(L), target, ctx))


def euler_all(L, ctx: Context, fields: Sequence[str] | None = None) -> tuple:
    fields = ctx.dependent if fields is None else fields
    return tuple(euler(L, f, ctx) for f in fields)


def frechet(F: Sequence, Q: Sequence, ctx: Context,
            fields: Sequence[str] | None = None) -> tuple:
    """(D_F Q)_a = sum_b,J dF_a/du^b_J * D_{J1} S_{J2} Q^b."""
    fields = list(ctx.dependent if fields is None else fields)
    if len(Q) != len(fields):
        raise ExprError(f"direction has {len(Q)} components, expected {len(fields)}")
    out = []
    for Fa in F:
        Fa = sp.sympify(Fa)
        acc = sp.Integer(0)
        for a in sorted(jets(Fa, fields), key=jet_order):
            acc += sp.diff(Fa, a) * _ds(Q[fields.index(a.field)], a.deriv, a.shift, ctx)
        out.append(normalize(acc))
    return tuple(out)


def frechet_adjoint(F: Sequence, W: Sequence, ctx: Context,
                    fields: Sequence[str] | None = None) -> tuple:
    """(D_F^* W)_a = sum_b,J (-D)_{J1} S_{-J2} (dF_b/du^a_J * W_b)."""
    fields = list(ctx.dependent if fields is None else fields)
    if len(W) != len(F):
        raise ExprError(f"adjoint argument has {len(W)} components, expected {len(F)}")
    out = []
    for fa in fields:
        acc = sp.Integer(0)
        for Fb, Wb in zip(F, W):
            Fb = sp.sympify(Fb)
            for a in sorted(jets(Fb, [fa]), key=jet_order):
                acc += _adj(sp.diff(Fb, a) * Wb, a.deriv, a.shift, ctx)
        out.append(normalize(acc))
    return tuple(out)


def divergence(P: DivergencePair, ctx: Context) -> sp.Expr:
    """Div P1 + Div^Delta P2."""
    if len(P.p1) != ctx.p1 or len(P.p2) != ctx.p2:
        raise ExprError("divergence pair arity does not match the context")
    acc = sp.Integer(0)
    for i, c in enumerate(P.p1):
        acc += _td(c, i, ctx)
    for j, c in enumerate(P.p2):
        acc += _sh(c, ctx.sunit(j), ctx) - c
    return normalize(acc)


# ---------------------------------------------------------------------------
# integration / summation by parts

def by_parts(terms: Sequence[tuple], targets: Sequence, ctx: Context,
             simplify: bool = True) -> ByPartsResult:
    """Move D_{J1} S_{J2} off each target.

    ``terms`` holds ``(coeff, J1, J2, k)`` standing for
    ``coeff * D_{J1} S_{J2} targets[k]``.  Derivatives are peeled first,
    then shifts, one unit step at a time, so every flux entry is a
    single-step flux.
    """
    char = [sp.Integer(0)] * len(targets)
    fd = [sp.Integer(0)] * ctx.p1
    fs = [sp.Integer(0)] * ctx.p2
    for coeff, J1, J2, k in terms:
        c = sp.sympify(coeff)
        if c == 0:
            continue
        g = targets[k]
        d = list(J1)
        s = list(J2)
        for i in range(ctx.p1):
            while d[i] > 0:
                d[i] -= 1
                fd[i] += c * _ds(g, d, s, ctx)
                c = -_td(c, i, ctx)
        for j in range(ctx.p2):
            while s[j] > 0:
                s[j] -= 1
                # c * S_j h = (S_j - id)(h * S_j^{-1} c) + h * S_j^{-1} c
                c = _sh(c, ctx.sunit(j, -1), ctx)
                fs[j] += _ds(g, d, s, ctx) * c
            while s[j] < 0:
                # c * S_j^{-1} h = S_j c * h - (S_j - id)(c * S_j^{-1} h)
                fs[j] -= c * _ds(g, d, s, ctx)
                s[j] += 1
                c = _sh(c, ctx.sunit(j, 1), ctx)
        char[k] += c
    norm = normalize if simplify else (lambda e: e)
    return ByPartsResult(tuple(norm(c) for c in char), tuple(norm(f) for f in fd),
                         tuple(norm(f) for f in fs))


def by_parts_terms(coeffs_of, fields: Sequence[str], expr, ctx: Context) -> list[tuple]:
    """Terms ``(coeffs_of(a), J1, J2, k)`` for every jet ``a`` of ``fields`` in ``expr``."""
    out = []
    for a in sorted(jets(expr, fields), key=jet_order):
        out.append((coeffs_of(a), a.deriv, a.shift, list(fields).index(a.field)))
    return out


# ---------------------------------------------------------------------------
# null Lagrangians

def _eps_integrate(e, eps) -> sp.Expr:
    """Integrate over eps in [0, 1] for the closed-form fragment.

    Supports sums of c * eps^k * exp(eps*w) and c * eps^k * ln(eps).
    """
    e = sp.sympify(e)
    if not e.has(eps):
        return e

    def split_log(l):
        arg = sp.factor_terms(l.args[0])
        return sp.expand_log(sp.log(arg), force=True)

    e = e.replace(lambda a: isinstance(a, sp.log) and a.has(eps), split_log)
    e = sp.expand(e, power_exp=True, log=False)
    e = sp.powsimp(e, combine="exp")
    total = sp.Integer(0)
    for term in sp.Add.make_args(e):
        indep, dep = term.as_independent(eps, as_Add=False)
        k = 0
        w = sp.Integer(0)
        w0 = sp.Integer(0)
        logs = 0
        for f in sp.Mul.make_args(dep):
            if f == eps:
                k += 1
            elif f.is_Pow and f.base == eps and f.exp.is_Integer:
                k += int(f.exp)
            elif isinstance(f, sp.exp):
                arg = sp.expand(f.args[0])
                poly = sp.Poly(arg, eps) if arg.is_polynomial(eps) else None
                if poly is None or poly.degree() > 1:
                    raise HomotopyError("homotopy integrand not closed-form: " + str(f))
                w += poly.coeff_monomial(eps)
                w0 += poly.coeff_monomial(1)
            elif f == sp.log(eps):
                logs += 1
            elif f == 1:
                continue
            else:
                raise HomotopyError("homotopy integrand not closed-form: " + str(f))
        if k < 0:
            raise HomotopyError("homotopy integrand not closed-form: singular at eps=0")
        w = sp.expand(w)
        if logs == 0 and w == 0:
            val = sp.Rational(1, k + 1)
        elif logs == 1 and w == 0:
            val = -sp.Rational(1, (k + 1) ** 2)
        elif logs == 0:
            val = (sp.exp(w) - 1) / w
            for m in range(1, k + 1):
                val = sp.exp(w) / w - sp.Integer(m) / w * val
        else:
            raise HomotopyError("homotopy integrand not closed-form: ln(eps)*exp(eps*w)")
        total += indep * sp.exp(w0) * val
    return total


def _drop_constants(e, ctx: Context):
    """Remove additive constants; they carry no divergence."""
    live = set(ctx.xs) | set(ctx.ns)
    keep = [t for t in sp.Add.make_args(e)
            if jets(t) or (t.free_symbols & live) or t.atoms(sp.core.function.AppliedUndef)]
    return normalize(sp.Add(*keep))


def _integrate_unit(e, eps):
    """Closed-form fragment first, then sympy's definite integral."""
    try:
        return _eps_integrate(e, eps)
    except HomotopyError:
        r = sp.integrate(e, (eps, 0, 1), conds="none")
        if r.has(sp.Integral) or r.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            raise
        return r


def _homotopy(L, ctx: Context, group: Sequence[str], base: int = 0):
    """Fluxes for L - L|_{group = base}, moving only the jets of ``group``.

    The path is u -> base + eps*(u - base); derived jets go to 0 at eps = 0.
    """
    eps = sp.Dummy("eps", positive=True)
    atoms = jets(L, group)
    at0 = {a: (0 if any(a.deriv) else base) for a in atoms}
    scale = {a: at0[a] + eps * (a - at0[a]) for a in atoms}
    terms = by_parts_terms(lambda a: sp.diff(L, a).xreplace(scale), group, L, ctx)
    bp = by_parts(terms, [ctx.base(f) - base for f in group], ctx, simplify=False)
    fd = [normalize(_integrate_unit(normalize(f), eps)) for f in bp.flux_d]
    fs = [normalize(_integrate_unit(normalize(f), eps)) for f in bp.flux_s]
    rest = sp.sympify(L).xreplace({a: sp.Integer(v) for a, v in at0.items()})
    if rest.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise HomotopyError("homotopy integrand not closed-form: L at the base point is singular")
    return fd, fs, normalize(rest)


def _absorb(L0, ctx: Context, fd: list, fs: list):
    """Add a flux for an expression free of field jets."""
    if L0 == 0:
        return
    if ctx.p1:
        B = sp.integrate(L0, ctx.x(0))
        if B.has(sp.Integral):
            raise HomotopyError("cannot integrate L(x, n, [0]) in closed form")
        fd[0] = normalize(fd[0] + B)
    else:
        n = ctx.n(0)
        k = sp.Dummy("k", integer=True)
        B = sp.summation(L0.subs(n, k), (k, 0, n - 1))
        if B.has(sp.Sum):
            raise HomotopyError("cannot sum L(x, n, [0]) in closed form")
        fs[0] = normalize(fs[0] + B)


def _singular_at_zero(L, fields) -> bool:
    z = sp.sympify(L).xreplace({a: sp.Integer(0) for a in jets(L, fields)})
    return z.has(sp.zoo, sp.nan, sp.oo, -sp.oo)


def null_lagrangian_decompose(L, ctx: Context, check: bool = True) -> DivergencePair:
    """Return (P1; P2) with Div P1 + Div^Delta P2 = L for a null Lagrangian L.

    Uses the eps-homotopy u -> eps*u over every declared field, then absorbs
    L(x, n, [0]) into the first continuous flux (or sums it over the first
    discrete variable when there is no continuous variable).  When the joint
    homotopy leaves the closed-form fragment, the fields are scaled one at a
    time instead (auxiliary fields first), which handles Lagrangians that
    are linear in some fields and rational in others.  Lagrangians with
    ln(u) or 1/u are singular on the zero section and use the path from
    u = 1 instead.
    """
    L = normalize(L)
    fields = ctx.fields
    if check:
        for f in fields:
            if jets(L, [f]) and normalize(_euler_raw(L, f, ctx)) != 0:
                raise NotNullLagrangian(f"not a null Lagrangian: E_{f}(L) != 0")
    if L == 0:
        return DivergencePair.zero(ctx)
    plans = [([list(fields)], 0)]
    if len(fields) > 1:
        order = list(ctx.auxiliary) + list(ctx.dependent)
        plans.append(([[f] for f in order], 0))
    if L.has(sp.log) or _singular_at_zero(L, fields):
        # ln(u) and 1/u blow up on the zero section; start the path at u = 1
        plans.append(([list(fields)], 1))
    err = None
    for plan, base in plans:
        try:
            fd = [sp.Integer(0)] * ctx.p1
            fs = [sp.Integer(0)] * ctx.p2
            rest = L
            for group in plan:
                if not jets(rest, group):
                    continue
                d, s, rest = _homotopy(rest, ctx, group, base)
                fd = [a + b for a, b in zip(fd, d)]
                fs = [a + b for a, b in zip(fs, s)]
            _absorb(rest, ctx, fd, fs)
            P = DivergencePair(tuple(_drop_constants(normalize(f), ctx) for f in fd),
                               tuple(_drop_constants(normalize(f), ctx) for f in fs))
            residue = normalize(divergence(P, ctx) - L)
            if residue != 0:
                raise HomotopyError(f"homotopy reconstruction failed, residue {residue}")
            return P
        except HomotopyError as exc:
            err = exc
    raise err

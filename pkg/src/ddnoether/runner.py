"""Execution of ``check`` lines and of the bundled fixture corpus."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .adjoint import adjoint_cl, adjoint_system, adjoint_via_frechet, check_self_adjoint
from .expr import ExprError, normalize, render
from .numeric import NUMERIC_RESIDUAL_TOL, numeric_verify
from .symmetry import EvolutionaryField, check_symmetry, solve_point
from .sysfile import Check, SystemFile, load, split_top
from .variational import (EXACT, ON_SOLUTIONS, equivalent_laws, euler_lagrange,
                          is_variational_symmetry, noether, verify_best)

__all__ = ["Row", "run_check", "run_checks", "run_fixture", "run_corpus", "corpus_dir",
           "format_rows"]


@dataclass(frozen=True)
class Row:
    fixture: str
    check: str
    ok: bool
    detail: str = ""


def corpus_dir() -> Path:
    return Path(__file__).with_name("corpus")


def _same_field(A, B) -> bool:
    a = tuple(A.xi) + tuple(A.phi) if not isinstance(A, EvolutionaryField) else tuple(A.Q)
    b = tuple(B.xi) + tuple(B.phi) if not isinstance(B, EvolutionaryField) else tuple(B.Q)
    return len(a) == len(b) and all(normalize(x - y) == 0 for x, y in zip(a, b))


def _field_text(X, ctx) -> str:
    if isinstance(X, EvolutionaryField):
        return "Q=(" + ", ".join(render(q, ctx) for q in X.Q) + ")"
    return ("xi=(" + ", ".join(render(x, ctx) for x in X.xi) + "); phi=("
            + ", ".join(render(p, ctx) for p in X.phi) + ")")


def _need(args, k, usage):
    if len(args) < k:
        raise ExprError(f"check needs: {usage}")


def run_check(sf: SystemFile, c: Check) -> tuple:
    """(ok, detail) for one check line; errors become failing rows."""
    ctx = sf.ctx
    R = lambda e: render(e, ctx)
    a = c.args
    k = c.kind
    if k in ("symmetry", "not-symmetry"):
        _need(a, 1, f"{k} FIELD [MODES...]")
        X = sf.vector_field(a[0])
        modes = a[1:] or (["caseI", "caseII"] if k == "symmetry" else ["regular"])
        sys = sf.system()
        res = {m: check_symmetry(sys, X, m) for m in modes}
        if k == "symmetry":
            bad = [m for m, v in res.items() if not v]
            if bad:
                return False, f"fails {bad[0]}: residue {R(res[bad[0]].residues[0])}"
            return True, "symmetry under " + ",".join(modes)
        good = [m for m, v in res.items() if v]
        if good:
            return False, f"unexpectedly a symmetry under {good[0]}"
        m = modes[0]
        return True, f"not a symmetry ({m}): residue {R(res[m].residues[0])}"
    if k == "solve-point":
        _need(a, 2, "solve-point MODE DIM [FIELDS...]")
        ps = solve_point(sf.system(), a[0])
        gens = ps.all_generators
        want = [sf.vector_field(n) for n in a[2:]]
        missing = [n for n, X in zip(a[2:], want) if not any(_same_field(X, G) for G in gens)]
        txt = "; ".join("{" + _field_text(G, ctx) + "}" for G in gens)
        if len(gens) != int(a[1]) or missing:
            return False, f"got {len(gens)} generators {txt}; unmatched {missing}"
        return True, f"{len(gens)} generators {txt}"
    if k == "self-adjoint":
        _need(a, 1, "self-adjoint SUB [CLASS]")
        v = check_self_adjoint(sf.system(), sf.substitution(a[0]))
        if not v:
            return False, "residue " + ", ".join(render(r, ctx.with_auxiliary()) for r in v.residues)
        if len(a) > 1 and v.detail != a[1]:
            return False, f"self-adjoint but {v.detail}, expected {a[1]}"
        return True, f"self-adjoint ({v.detail})"
    if k == "adjoint":
        actx = ctx.with_auxiliary()
        sys = sf.system()
        got = adjoint_system(sys)
        other = adjoint_via_frechet(sys)
        if any(normalize(x - y) != 0 for x, y in zip(got, other)):
            return False, "formal-Lagrangian and Frechet adjoints disagree"
        if c.expr:
            from .expr import parse
            want = [parse(t, actx) for t, _ in split_top(c.expr, ",")]
            diffs = [normalize(x - y) for x, y in zip(got, want)]
            if len(want) != len(got):
                return False, f"expected {len(got)} adjoint equations, got {len(want)}"
            if any(d != 0 for d in diffs):
                return False, ("adjoint " + ", ".join(render(g, actx) for g in got)
                               + "; residue " + ", ".join(render(d, actx) for d in diffs))
        return True, "adjoint " + ", ".join(render(g, actx) for g in got)
    if k in ("cl", "record"):
        _need(a, 1, f"{k} LAW [exact|on-solutions]")
        out = verify_best(sf.law(a[0]))
        detail = f"{out.verified}" + ("" if out.residue == 0 else f": residue {R(out.residue)}")
        if k == "record":
            return True, "recorded " + detail
        want = a[1] if len(a) > 1 else "on-solutions"
        if want == "exact":
            return out.verified == EXACT, detail
        return out.verified in (EXACT, ON_SOLUTIONS), detail
    if k in ("variational", "not-variational"):
        _need(a, 2, f"{k} LAGRANGIAN FIELD")
        v = is_variational_symmetry(sf.lagrangian(a[0]), sf.vector_field(a[1]))
        if k == "variational":
            return v.ok, "variational" if v.ok else f"residue {R(v.residues[0])}"
        return not v.ok, f"not variational: residue {R(v.residues[0])}" if not v.ok \
            else "unexpectedly variational"
    if k == "noether":
        _need(a, 3, "noether LAGRANGIAN FIELD LAW")
        lag = sf.lagrangian(a[0])
        sys = sf.system() if sf.equations else euler_lagrange(lag)
        cl = noether(lag, sf.vector_field(a[1]), sys)
        law = sf.law(a[2], sys)
        eq = equivalent_laws(cl.P, law.P, ctx, sys)
        txt = "P=(" + ", ".join(R(p) for p in cl.P.p1 + cl.P.p2) + ")"
        if not eq:
            return False, f"{txt} differs from {a[2]}: characteristic difference {R(eq.residues[0])}"
        return cl.verified == EXACT, f"{cl.verified}, equivalent to {a[2]}; {txt}"
    if k == "euler":
        _need(a, 2, "euler LAGRANGIAN EQUATION")
        E = euler_lagrange(sf.lagrangian(a[0])).equations
        F = sf.equations[a[1]].expr
        ok = len(E) == 1 and normalize(E[0] - F) == 0
        return ok, "E(L) = " + R(E[0])
    if k == "adjoint-cl":
        _need(a, 3, "adjoint-cl FIELD SUB LAW [ROUTE]")
        sys = sf.system()
        route = a[3] if len(a) > 3 else "remark"
        cl = adjoint_cl(sys, sf.vector_field(a[0]), sf.substitution(a[1]), route)
        law = sf.law(a[2], sys)
        eq = equivalent_laws(cl.P, law.P, ctx, sys)
        txt = f"Q~=({', '.join(R(q) for q in cl.Q)})"
        if not eq:
            return False, f"{txt}; differs from {a[2]}: characteristic difference {R(eq.residues[0])}"
        return True, f"{cl.verified}, {txt}, equivalent to {a[2]}"
    if k == "numeric":
        _need(a, 2, "numeric LAW TOL")
        rep = numeric_verify(sf.law(a[0]))
        tol = float(a[1])
        ok = rep.max_density_drift < tol and rep.pointwise_divergence_residual < NUMERIC_RESIDUAL_TOL
        return ok, (f"drift {rep.max_density_drift:.3e} (tol {tol:g}),"
                    f" residual {rep.pointwise_divergence_residual:.3e}")
    if k == "equivalent":
        _need(a, 2, "equivalent LAW LAW")
        sys = sf.system()
        eq = equivalent_laws(sf.law(a[0], sys).P, sf.law(a[1], sys).P, ctx, sys)
        return eq.ok, "equivalent" if eq.ok else f"characteristic difference {R(eq.residues[0])}"
    raise ExprError(f"unknown check kind {k!r}")


def run_checks(sf: SystemFile, name: str = "") -> list:
    rows = []
    for c in sf.checks:
        try:
            ok, detail = run_check(sf, c)
        except (ExprError, ValueError, KeyError, ZeroDivisionError) as e:
            ok, detail = False, f"error: {e}"
        rows.append(Row(name or sf.path, c.text, bool(ok), detail))
    return rows


def run_fixture(path) -> list:
    name = Path(path).stem
    try:
        sf = load(path)
    except (ExprError, OSError) as e:
        return [Row(name, "parse", False, str(e))]
    rows = [Row(name, "round-trip", *_round_trip(sf))]
    return rows + run_checks(sf, name)


def _round_trip(sf: SystemFile) -> tuple:
    from .sysfile import loads
    text = sf.render()
    again = loads(text)
    ok = again.render() == text
    return ok, "parse/render fixed point" if ok else "render output does not re-parse identically"


def run_corpus(directory=None, jobs: int | None = None) -> list:
    """All fixture rows, sorted by fixture name then file order."""
    d = Path(directory) if directory is not None else corpus_dir()
    files = sorted(d.glob("*.dde"))
    if not files:
        return []
    jobs = jobs if jobs is not None else min(len(files), os.cpu_count() or 1)
    if jobs <= 1:
        results = [run_fixture(f) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run_fixture, files))
    return [r for rows in sorted(results, key=lambda rs: rs[0].fixture if rs else "") for r in rows]


def format_rows(rows) -> str:
    if not rows:
        return "warning: no fixtures\n"
    w = max(len(r.fixture) for r in rows)
    lines = [f"{'PASS' if r.ok else 'FAIL'}  {r.fixture:<{w}}  {r.check}  -- {r.detail}"
             for r in rows]
    passed = sum(r.ok for r in rows)
    lines.append(f"{passed}/{len(rows)} checks passed")
    return "\n".join(lines) + "\n"

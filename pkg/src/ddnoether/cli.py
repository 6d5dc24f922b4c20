"""Command-line front end: ``ddnoether SUBCOMMAND SYSFILE [options]``.

Exit codes: 0 success or positive verdict, 1 negative verdict (the residue
is printed), 2 usage or parse errors.
"""
from __future__ import annotations

import argparse
import sys
from typing import Sequence

from . import numeric
from .adjoint import adjoint_cl, adjoint_system, check_self_adjoint, formal_lagrangian
from .expr import ExprError, ParseError, render
from .runner import corpus_dir, format_rows, run_corpus
from .symmetry import MODES, EvolutionaryField, check_symmetry, solve_point
from .sysfile import SysFileError, UnknownName, load
from .variational import is_variational_symmetry, noether, verify_best, verify_cl

__all__ = ["main", "run", "build_parser"]

OK, NEGATIVE, USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddnoether", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def with_file(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("sysfile")
        return s

    with_file("parse", "parse a system file and print its normalized form")
    s = with_file("check-symmetry", "test a vector field against the system")
    s.add_argument("--field", required=True)
    s.add_argument("--mode", choices=MODES, action="append",
                   help="prolongation (repeatable; default caseI and caseII)")
    s = with_file("solve-point", "point symmetries under the carrier ansatz")
    s.add_argument("--mode", choices=MODES, default="caseI")
    s = with_file("noether", "conservation law from a variational symmetry")
    s.add_argument("--lagrangian")
    s.add_argument("--field", required=True)
    s = with_file("check-variational", "is the field a variational symmetry")
    s.add_argument("--lagrangian")
    s.add_argument("--field", required=True)
    with_file("adjoint", "formal Lagrangian and adjoint system")
    s = with_file("check-self-adjoint", "adjoint system under a substitution")
    s.add_argument("--sub", required=True, help='substitution name or text like "v = -u"')
    s = with_file("adjoint-cl", "conservation law of a self-adjoint system")
    s.add_argument("--field", required=True)
    s.add_argument("--sub", required=True)
    s.add_argument("--route", choices=("remark", "extended"), default="remark")
    s = with_file("verify-cl", "verify a declared conservation law")
    s.add_argument("--cl", required=True)
    s.add_argument("--mode", choices=("best", "identity", "on-solutions"), default="best")
    s = with_file("numeric-verify", "RK4 cross-check of a conservation law")
    s.add_argument("--cl", required=True)
    s.add_argument("--ring", type=int, default=numeric.DEFAULT_RING)
    s.add_argument("--dt", type=float, default=numeric.DEFAULT_DT)
    s.add_argument("--t-end", type=float, default=numeric.DEFAULT_T_END)
    s.add_argument("--seed", type=int, default=numeric.DEFAULT_SEED)
    s.add_argument("--tol", type=float, default=1e-6, help="allowed relative drift")
    s = sub.add_parser("corpus", help="run the bundled fixtures")
    s.add_argument("--dir", default=None)
    s.add_argument("--jobs", type=int, default=None)
    return p


def _fields_text(X, ctx) -> str:
    R = lambda e: render(e, ctx)
    if isinstance(X, EvolutionaryField):
        return "Q = " + ", ".join(R(q) for q in X.Q)
    return "xi = " + ", ".join(R(x) for x in X.xi) + "; phi = " + ", ".join(R(p) for p in X.phi)


def _law_text(cl, ctx) -> list:
    R = lambda e: render(e, ctx)
    out = []
    if ctx.p1:
        out.append("P1 = " + ", ".join(R(p) for p in cl.P.p1))
    if ctx.p2:
        out.append("P2 = " + ", ".join(R(p) for p in cl.P.p2))
    if cl.Q:
        out.append("Q = " + ", ".join(R(q) for q in cl.Q))
    return out


def _cmd(args, out) -> int:
    if args.cmd == "corpus":
        d = args.dir if args.dir is not None else corpus_dir()
        rows = run_corpus(d, args.jobs)
        out.write(format_rows(rows))
        return OK if all(r.ok for r in rows) else NEGATIVE
    sf = load(args.sysfile)
    ctx = sf.ctx
    R = lambda e: render(e, ctx)
    w = lambda s="": out.write(s + "\n")
    if args.cmd == "parse":
        out.write(sf.render())
        return OK
    if args.cmd == "check-symmetry":
        X = sf.vector_field(args.field)
        sys_ = sf.system()
        code = OK
        for m in args.mode or ["caseI", "caseII"]:
            v = check_symmetry(sys_, X, m)
            if v:
                w(f"symmetry ({m})")
            else:
                w(f"not a symmetry ({m}): residue " + ", ".join(R(r) for r in v.residues))
                code = NEGATIVE
        return code
    if args.cmd == "solve-point":
        ps = solve_point(sf.system(), args.mode)
        if not ps.solution.consistent:
            w("determining equations are inconsistent")
            return NEGATIVE
        for k, G in enumerate(ps.generators, 1):
            w(f"generator {k}: {_fields_text(G, ctx)}")
        for k, G in enumerate(ps.free, 1):
            w(f"free {k}: {_fields_text(G, ctx)}")
        w(f"general: {_fields_text(ps.general, ctx)}")
        return OK
    if args.cmd in ("noether", "check-variational"):
        lag = sf.lagrangian(args.lagrangian)
        X = sf.vector_field(args.field)
        v = is_variational_symmetry(lag, X)
        if not v:
            w("not variational: residue " + ", ".join(R(r) for r in v.residues))
            return NEGATIVE
        if args.cmd == "check-variational":
            w("variational")
            return OK
        cl = noether(lag, X, sf.system() if sf.equations else None)
        for line in _law_text(cl, ctx):
            w(line)
        w(cl.verified)
        return OK
    if args.cmd == "adjoint":
        fl = formal_lagrangian(sf.system())
        w("formal Lagrangian: " + render(fl.L, fl.ctx))
        for name, e in zip(sf.system().names, adjoint_system(sf.system())):
            w(f"{name}*: " + render(e, fl.ctx))
        return OK
    if args.cmd == "check-self-adjoint":
        v = check_self_adjoint(sf.system(), sf.substitution(args.sub))
        if v:
            w(f"self-adjoint ({v.detail})")
            return OK
        w("not self-adjoint: residue " + ", ".join(render(r, ctx.with_auxiliary())
                                                   for r in v.residues))
        return NEGATIVE
    if args.cmd == "adjoint-cl":
        cl = adjoint_cl(sf.system(), sf.vector_field(args.field), sf.substitution(args.sub),
                        args.route)
        for line in _law_text(cl, ctx):
            w(line)
        w(cl.verified)
        return OK
    if args.cmd == "verify-cl":
        cl = sf.law(args.cl)
        res = verify_best(cl) if args.mode == "best" else verify_cl(cl, args.mode)
        w(res.verified)
        if res.residue != 0:
            w("residue " + R(res.residue))
        return OK if res.verified != "unverified" else NEGATIVE
    if args.cmd == "numeric-verify":
        cl = sf.law(args.cl)
        rep = numeric.numeric_verify(cl, args.ring, args.dt, args.t_end, args.seed)
        w(rep.to_text())
        w(rep.to_json())
        good = (rep.max_density_drift < args.tol
                and rep.pointwise_divergence_residual < numeric.NUMERIC_RESIDUAL_TOL)
        return OK if good else NEGATIVE
    raise ExprError(f"unknown command {args.cmd}")


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else USAGE
    try:
        return _cmd(args, out)
    except SysFileError as e:
        err.write(f"parse error: {e}\n")
        return USAGE
    except ParseError as e:
        err.write(f"parse error: {e}\n")
        return USAGE
    except UnknownName as e:
        err.write(f"error: {e}\n")
        return USAGE
    except OSError as e:
        err.write(f"error: {e}\n")
        return USAGE
    except ExprError as e:
        err.write(f"error: {e}\n")
        return NEGATIVE


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

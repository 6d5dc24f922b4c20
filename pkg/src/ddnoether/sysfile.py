"""Reader and writer for the line-oriented system file format.

::

    ddnoether/1
    continuous t
    discrete n
    dependent u
    equation F1: u[1;0]/u - u[0;1] + u[0;-1]  lead u[1;0] = u*(u[0;1]-u[0;-1])
    field X1: xi = -t; phi = u
    cl law1: P1 = u; P2 = -u*u[0;-1]; Q = u

Beyond the base grammar the reader accepts ``auxiliary``, ``parameter``
(optionally ``parameter positive``), ``function f(t)``, ``charfield``,
``lagrangian``, ``sub``, an ``orient`` suffix on solved forms and ``check``
lines that state expected outcomes for the corpus runner.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import sympy as sp

from .calculus import DivergencePair
from .expr import Context, ExprError, Jet, ParseError, parse, parse_raw, render
from .symmetry import DDESystem, EvolutionaryField, SolvedForm, VectorField
from .variational import ConservationLaw, Lagrangian

__all__ = [
    "HEADER",
    "SysFileError",
    "UnknownName",
    "EquationDecl",
    "LawDecl",
    "Check",
    "SystemFile",
    "loads",
    "load",
    "split_top",
]

HEADER = "ddnoether/1"
CONTEXT_KEYS = ("continuous", "discrete", "dependent", "auxiliary", "parameter", "function")
CHECK_KINDS = ("symmetry", "not-symmetry", "solve-point", "self-adjoint", "adjoint", "cl",
               "record", "variational", "not-variational", "noether", "euler", "adjoint-cl",
               "numeric", "equivalent")


class UnknownName(ExprError):
    """A referenced field, law, lagrangian or substitution is not declared."""


class SysFileError(ParseError):
    """Error with an absolute byte offset into the file and its line number."""

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message, offset)


@dataclass
class EquationDecl:
    name: str
    expr: sp.Expr
    solved: list = field(default_factory=list)    # solved forms taken from this equation


@dataclass
class LawDecl:
    name: str
    P: DivergencePair
    Q: tuple | None = None


@dataclass
class Check:
    kind: str
    args: list
    expr: str | None
    line: int
    text: str


@dataclass
class SystemFile:
    ctx: Context
    equations: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    charfields: dict = field(default_factory=dict)
    lagrangians: dict = field(default_factory=dict)
    subs: dict = field(default_factory=dict)
    laws: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    path: str = ""

    # lookups ---------------------------------------------------------------
    def system(self) -> DDESystem:
        eqs = list(self.equations.values())
        if not eqs:
            raise ExprError("file declares no equations")
        return DDESystem(self.ctx, tuple(e.expr for e in eqs),
                         [sf for e in eqs for sf in e.solved],
                         names=tuple(e.name for e in eqs))

    def vector_field(self, name: str):
        if name in self.fields:
            return self.fields[name]
        if name in self.charfields:
            return self.charfields[name]
        raise UnknownName(f"unknown field {name!r}")

    def lagrangian(self, name: str | None = None) -> Lagrangian:
        return _pick(self.lagrangians, name, "lagrangian")

    def law(self, name: str, system: DDESystem | None = None) -> ConservationLaw:
        d = _pick(self.laws, name, "conservation law")
        sys = system or self.system()
        Q = d.Q if d.Q is not None else ()
        return ConservationLaw(d.P, Q, sys)

    def substitution(self, name_or_text: str):
        from .adjoint import Substitution
        if name_or_text in self.subs:
            return self.subs[name_or_text]
        return Substitution.make(self.ctx, _bindings(name_or_text, self.ctx.with_auxiliary(), 0, 0))

    # output ----------------------------------------------------------------
    def render(self) -> str:
        ctx = self.ctx
        actx = ctx.with_auxiliary()
        R = lambda e: render(e, ctx)
        out = [HEADER] + ctx.header()
        for d in self.equations.values():
            line = f"equation {d.name}: {R(d.expr)}"
            for sf in d.solved:
                line += f"  lead {R(sf.lead)} = {R(sf.rhs)}"
                if sf.orient != _default_orient(sf):
                    line += " orient " + " ".join(_sign(o) for o in sf.orient)
            out.append(line)
        for name, X in self.fields.items():
            parts = []
            if ctx.p1:
                parts.append("xi = " + ", ".join(R(x) for x in X.xi))
            parts.append("phi = " + ", ".join(R(p) for p in X.phi))
            out.append(f"field {name}: " + "; ".join(parts))
        for name, X in self.charfields.items():
            out.append(f"charfield {name}: Q = " + ", ".join(R(q) for q in X.Q))
        for name, lag in self.lagrangians.items():
            out.append(f"lagrangian {name}: {R(lag.L)}")
        for name, sub in self.subs.items():
            out.append(f"sub {name}: " + "; ".join(
                f"{v} = {render(b, actx)}" for v, b in zip(actx.auxiliary, sub.bindings)))
        for d in self.laws.values():
            parts = []
            if ctx.p1:
                parts.append("P1 = " + ", ".join(R(p) for p in d.P.p1))
            if ctx.p2:
                parts.append("P2 = " + ", ".join(R(p) for p in d.P.p2))
            if d.Q is not None:
                parts.append("Q = " + ", ".join(R(q) for q in d.Q))
            out.append(f"cl {d.name}: " + "; ".join(parts))
        for c in self.checks:
            out.append(c.text)
        return "\n".join(out) + "\n"


def _default_orient(sf: SolvedForm):
    try:
        return SolvedForm.make(sf.lead, sf.rhs).orient
    except ExprError:
        return None


def _sign(o: int) -> str:
    return {1: "+", -1: "-", 0: "0"}[o]


def _pick(table: dict, name, what: str):
    if name is None:
        if len(table) != 1:
            raise UnknownName(f"name the {what}: file has {len(table)}")
        return next(iter(table.values()))
    if name not in table:
        raise UnknownName(f"unknown {what} {name!r}")
    return table[name]


# ---------------------------------------------------------------------------
# splitting helpers

def split_top(text: str, sep: str) -> list:
    """Split on ``sep`` outside brackets and parentheses; returns (piece, start) pairs."""
    out = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            out.append((text[start:i], start))
            start = i + 1
    out.append((text[start:], start))
    return out


def _find_word(text: str, word: str) -> int:
    """Position of ``word`` as a standalone token at bracket depth 0, or -1."""
    depth = 0
    for m in re.finditer(r"[()\[\]]|\b" + word + r"\b", text):
        tok = m.group(0)
        if tok in "([":
            depth += 1
        elif tok in ")]":
            depth -= 1
        elif depth == 0:
            return m.start()
    return -1


class _Reader:
    def __init__(self, text: str, path: str = ""):
        self.text = text
        self.path = path
        self.decls: dict = {k: [] for k in CONTEXT_KEYS}
        self.positive: list = []
        self.functions: dict = {}
        self.sf: SystemFile | None = None
        self.names: set = set()

    def fail(self, msg: str, offset: int, line: int):
        # offsets are tracked in characters; report bytes
        raise SysFileError(msg, len(self.text[:offset].encode("utf-8")), line)

    def expr(self, s: str, base: int, line: int, ctx: Context | None = None, raw=False):
        ctx = ctx or self.sf.ctx
        lead = len(s) - len(s.lstrip())
        body = s.strip()
        if not body:
            self.fail("empty expression", base, line)
        try:
            return (parse_raw if raw else parse)(body, ctx)
        except ParseError as e:
            off = base + lead + (e.offset or 0)
            msg = str(e).split(" at byte ")[0]
            self.fail(msg, off, line)
        except ExprError as e:
            self.fail(str(e), base + lead, line)

    def context(self) -> Context:
        d = self.decls
        try:
            return Context(d["continuous"], d["discrete"], d["dependent"] or ["u"],
                           d["auxiliary"], d["parameter"], self.positive, self.functions)
        except ExprError as e:
            raise SysFileError(str(e), 0, None) from None

    def run(self) -> SystemFile:
        lines = self.text.splitlines(keepends=True)
        pos = 0
        seen_header = False
        for lineno, raw in enumerate(lines, 1):
            start = pos
            pos += len(raw)
            body = raw.split("#", 1)[0].rstrip("\r\n")
            if not body.strip():
                continue
            if not seen_header:
                if body.strip() != HEADER:
                    self.fail(f"expected header {HEADER!r}", start, lineno)
                seen_header = True
                continue
            self.line(body, start, lineno)
        if not seen_header:
            self.fail(f"expected header {HEADER!r}", 0, 1)
        if self.sf is None:
            self.sf = SystemFile(self.context(), path=self.path)
        return self.sf

    def line(self, body: str, start: int, lineno: int):
        m = re.match(r"\s*([A-Za-z][A-Za-z-]*)", body)
        if not m:
            self.fail("expected a keyword", start, lineno)
        key = m.group(1)
        rest_at = m.end()
        rest = body[rest_at:]
        if key in CONTEXT_KEYS:
            if self.sf is not None:
                self.fail(f"{key} must come before equations and other declarations",
                          start, lineno)
            words = rest.split()
            if key == "function":
                fm = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*\(([^)]*)\)\s*", rest)
                if not fm:
                    self.fail("expected function name(args)", start + rest_at, lineno)
                self.functions[fm.group(1)] = tuple(a.strip() for a in fm.group(2).split(",")
                                                    if a.strip())
            elif key == "parameter" and words and words[0] == "positive":
                self.positive.extend(words[1:])
            else:
                self.decls[key].extend(words)
            return
        if key == "check":
            self.check(body, rest, start + rest_at, lineno)
            return
        if self.sf is None:
            self.sf = SystemFile(self.context(), path=self.path)
        hm = re.match(r"\s*([A-Za-z_][\w*]*)\s*:", rest)
        if not hm:
            self.fail(f"expected '{key} NAME:'", start + rest_at, lineno)
        name = hm.group(1)
        if name in self.names:
            self.fail(f"duplicate name {name!r}", start + rest_at, lineno)
        self.names.add(name)
        body_at = start + rest_at + hm.end()
        text = rest[hm.end():]
        handler = {
            "equation": self.equation, "field": self.field, "charfield": self.charfield,
            "lagrangian": self.lagrangian, "sub": self.sub, "cl": self.law,
        }.get(key)
        if handler is None:
            self.fail(f"unknown keyword {key!r}", start, lineno)
        handler(name, text, body_at, lineno)

    # declarations ------------------------------------------------------------
    def equation(self, name, text, base, line):
        at = _find_word(text, "lead")
        if at < 0:
            self.sf.equations[name] = EquationDecl(name, self.expr(text, base, line))
            return
        expr = self.expr(text[:at], base, line)
        solved = []
        while at >= 0:
            tail = text[at + 4:]
            nxt = _find_word(tail, "lead")
            clause = tail if nxt < 0 else tail[:nxt]
            solved.append(self.solved_form(clause, base + at + 4, line))
            at = -1 if nxt < 0 else at + 4 + nxt
        self.sf.equations[name] = EquationDecl(name, expr, solved)

    def solved_form(self, tail, tbase, line) -> SolvedForm:
        ctx = self.sf.ctx
        orient = None
        o_at = _find_word(tail, "orient")
        if o_at >= 0:
            toks = tail[o_at + 6:].split()
            conv = {"+": 1, "-": -1, "0": 0, "1": 1, "-1": -1}
            if len(toks) != ctx.p2 or any(t not in conv for t in toks):
                self.fail(f"orient needs {ctx.p2} entries from + - 0", tbase + o_at, line)
            orient = [conv[t] for t in toks]
            tail = tail[:o_at]
        parts = split_top(tail, "=")
        if len(parts) != 2:
            self.fail("expected 'lead ATOM = RHS'", tbase, line)
        (ls, lo), (rs, ro) = parts
        lead = self.expr(ls, tbase + lo, line)
        if not isinstance(lead, Jet):
            self.fail("lead must be a single jet atom", tbase + lo, line)
        rhs = self.expr(rs, tbase + ro, line)
        try:
            return SolvedForm.make(lead, rhs, orient)
        except ExprError as e:
            self.fail(str(e), tbase, line)

    def slots(self, text, base, line, allowed):
        out = {}
        for piece, off in split_top(text, ";"):
            if not piece.strip():
                continue
            kv = split_top(piece, "=")
            if len(kv) != 2:
                self.fail("expected KEY = values", base + off, line)
            key = kv[0][0].strip()
            if key not in allowed:
                self.fail(f"unexpected key {key!r}", base + off, line)
            vbase = base + off + kv[1][1]
            out[key] = [self.expr(v, vbase + o, line) for v, o in split_top(kv[1][0], ",")]
        return out

    def field(self, name, text, base, line):
        ctx = self.sf.ctx
        s = self.slots(text, base, line, ("xi", "phi"))
        xi = s.get("xi", [sp.Integer(0)] * ctx.p1)
        phi = s.get("phi", [sp.Integer(0)] * ctx.q)
        try:
            self.sf.fields[name] = VectorField.make(xi, phi, ctx)
        except ExprError as e:
            self.fail(str(e), base, line)

    def charfield(self, name, text, base, line):
        s = self.slots(text, base, line, ("Q",))
        try:
            self.sf.charfields[name] = EvolutionaryField.make(s.get("Q", []), self.sf.ctx)
        except ExprError as e:
            self.fail(str(e), base, line)

    def lagrangian(self, name, text, base, line):
        self.sf.lagrangians[name] = Lagrangian.make(self.expr(text, base, line), self.sf.ctx)

    def sub(self, name, text, base, line):
        from .adjoint import Substitution
        actx = self.sf.ctx.with_auxiliary()
        try:
            self.sf.subs[name] = Substitution.make(self.sf.ctx,
                                                   _bindings(text, actx, base, line, self))
        except SysFileError:
            raise
        except ExprError as e:
            self.fail(str(e), base, line)

    def law(self, name, text, base, line):
        ctx = self.sf.ctx
        s = self.slots(text, base, line, ("P1", "P2", "Q"))
        p1 = s.get("P1", [])
        p2 = s.get("P2", [])
        if len(p1) != ctx.p1 or len(p2) != ctx.p2:
            self.fail(f"law needs {ctx.p1} P1 and {ctx.p2} P2 entries", base, line)
        Q = tuple(s["Q"]) if "Q" in s else None
        self.sf.laws[name] = LawDecl(name, DivergencePair(tuple(p1), tuple(p2)), Q)

    def check(self, body, rest, base, line):
        at = -1
        depth = 0
        for i, ch in enumerate(rest):
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
            elif ch == ":" and depth == 0:
                at = i
                break
        head = rest if at < 0 else rest[:at]
        expr = None if at < 0 else rest[at + 1:].strip()
        words = head.split()
        if not words or words[0] not in CHECK_KINDS:
            self.fail(f"unknown check kind; expected one of {', '.join(CHECK_KINDS)}",
                      base, line)
        if self.sf is None:
            self.sf = SystemFile(self.context(), path=self.path)
        self.sf.checks.append(Check(words[0], words[1:], expr, line, body.strip()))


def _bindings(text: str, actx: Context, base: int, line, reader: _Reader | None = None) -> dict:
    out = {}
    for piece, off in split_top(text, ";"):
        if not piece.strip():
            continue
        kv = split_top(piece, "=")
        if len(kv) != 2 or kv[0][0].strip() not in actx.auxiliary:
            raise SysFileError(f"expected 'AUX = expr' with AUX in {actx.auxiliary}",
                               base + off, line)
        vbase = base + off + kv[1][1]
        if reader is not None:
            out[kv[0][0].strip()] = reader.expr(kv[1][0], vbase, line, actx)
        else:
            try:
                out[kv[0][0].strip()] = parse(kv[1][0].strip(), actx)
            except ParseError as e:
                raise SysFileError(str(e).split(" at byte ")[0],
                                   vbase + (e.offset or 0), line) from None
    return out


def loads(text: str, path: str = "") -> SystemFile:
    return _Reader(text, path).run()


def load(path) -> SystemFile:
    p = Path(path)
    return loads(p.read_text(encoding="utf-8"), str(p))

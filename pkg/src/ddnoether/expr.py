"""Expression core: jet coordinates, the text grammar, and canonical normalization.

Expressions are plain sympy trees.  Every derivative/shift of a dependent
(or auxiliary) variable is an independent coordinate represented by a
:class:`Jet` symbol, e.g. ``u[1;0]`` is u' and ``u[0;-1]`` is u_{n-1}.
Continuous variables are real symbols, discrete variables are integer
symbols, and the alternating token (-1)^n is an ordinary sympy power with
base -1 that :func:`normalize` keeps in canonical form.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import sympy as sp

__all__ = [
    "Context",
    "Jet",
    "ParseError",
    "ExprError",
    "parse",
    "render",
    "normalize",
    "is_zero",
    "partial",
    "substitute",
    "jets",
    "jet_order",
]


class ExprError(ValueError):
    """Raised for invalid expressions or contexts."""


class ParseError(ExprError):
    """Syntax or semantic error while reading the expression grammar."""

    def __init__(self, message: str, offset: int | None = None, text: str | None = None):
        self.offset = offset
        self.text = text
        loc = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{loc}")


class Jet(sp.Symbol):
    """The jet coordinate ``field_{deriv;shift}``.

    ``deriv`` holds non-negative derivative orders (one per continuous
    variable), ``shift`` holds signed offsets (one per discrete variable).
    """

    def __new__(cls, field_name: str, deriv: Sequence[int] = (), shift: Sequence[int] = ()):
        deriv = tuple(int(d) for d in deriv)
        shift = tuple(int(s) for s in shift)
        if any(d < 0 for d in deriv):
            raise ExprError(f"negative derivative index in {field_name}{list(deriv)}")
        name = f"{field_name}[{','.join(map(str, deriv))};{','.join(map(str, shift))}]"
        obj = sp.Symbol.__xnew__(cls, name)
        obj.field = field_name
        obj.deriv = deriv
        obj.shift = shift
        return obj

    def __getnewargs_ex__(self):
        return (self.field, self.deriv, self.shift), {}

    @property
    def order(self) -> int:
        return sum(self.deriv)

    def bumped(self, i: int, k: int = 1) -> "Jet":
        d = list(self.deriv)
        d[i] += k
        return Jet(self.field, d, self.shift)

    def shifted(self, offsets: Sequence[int]) -> "Jet":
        return Jet(self.field, self.deriv, [a + b for a, b in zip(self.shift, offsets)])


def jets(e: sp.Expr, fields: Iterable[str] | None = None) -> set[Jet]:
    """All jet coordinates occurring in ``e`` (optionally restricted to ``fields``)."""
    found = sp.sympify(e).atoms(Jet)
    if fields is not None:
        keep = set(fields)
        found = {a for a in found if a.field in keep}
    return found


def jet_order(a: Jet) -> tuple:
    """Total order on jets used wherever deterministic iteration matters."""
    return (a.field, sum(a.deriv), a.deriv, sum(abs(s) for s in a.shift), a.shift)


@dataclass
class Context:
    """Declared variables of a problem.

    ``functions`` maps an unknown-function name to its argument names
    (e.g. ``{"f": ("t",)}``); ``positive`` lists parameters flagged positive.
    """

    continuous: list[str] = field(default_factory=list)
    discrete: list[str] = field(default_factory=list)
    dependent: list[str] = field(default_factory=lambda: ["u"])
    auxiliary: list[str] = field(default_factory=list)
    parameters: list[str] = field(default_factory=list)
    positive: list[str] = field(default_factory=list)
    functions: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.parameters = list(self.parameters) + [p for p in self.positive
                                                   if p not in self.parameters]
        names = (self.continuous + self.discrete + self.dependent + self.auxiliary
                 + self.parameters + list(self.functions))
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ExprError(f"duplicate names in context: {sorted(dup)}")
        if not self.dependent:
            raise ExprError("context needs at least one dependent variable")
        if not self.continuous and not self.discrete:
            raise ExprError("context needs at least one independent variable")
        reserved = {"exp", "ln", "sin", "cos", "D", "S", "diff"}
        bad = reserved.intersection(names)
        if bad:
            raise ExprError(f"reserved names used: {sorted(bad)}")
        for n in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", n):
                raise ExprError(f"invalid identifier {n!r}")

    # dimensions -----------------------------------------------------------
    @property
    def p1(self) -> int:
        return len(self.continuous)

    @property
    def p2(self) -> int:
        return len(self.discrete)

    @property
    def q(self) -> int:
        return len(self.dependent)

    @property
    def fields(self) -> list[str]:
        return self.dependent + self.auxiliary

    # symbols --------------------------------------------------------------
    def x(self, i: int) -> sp.Symbol:
        return sp.Symbol(self.continuous[i], real=True)

    def n(self, j: int) -> sp.Symbol:
        return sp.Symbol(self.discrete[j], integer=True)

    @property
    def xs(self) -> list[sp.Symbol]:
        return [self.x(i) for i in range(self.p1)]

    @property
    def ns(self) -> list[sp.Symbol]:
        return [self.n(j) for j in range(self.p2)]

    def param(self, name: str) -> sp.Symbol:
        if name in self.positive:
            return sp.Symbol(name, positive=True)
        return sp.Symbol(name, real=True)

    def function(self, name: str) -> sp.FunctionClass:
        return sp.Function(name)

    def jet(self, field_name: str, deriv: Sequence[int] | None = None,
            shift: Sequence[int] | None = None) -> Jet:
        if field_name not in self.fields:
            raise ExprError(f"unknown field {field_name!r}")
        deriv = tuple(deriv) if deriv is not None else (0,) * self.p1
        shift = tuple(shift) if shift is not None else (0,) * self.p2
        if len(deriv) != self.p1 or len(shift) != self.p2:
            raise ExprError(
                f"index arity mismatch for {field_name}: expected ({self.p1};{self.p2}),"
                f" got ({len(deriv)};{len(shift)})")
        return Jet(field_name, deriv, shift)

    def base(self, field_name: str) -> Jet:
        return self.jet(field_name)

    def unit(self, i: int) -> tuple[int, ...]:
        return tuple(1 if k == i else 0 for k in range(self.p1))

    def sunit(self, j: int, k: int = 1) -> tuple[int, ...]:
        return tuple(k if m == j else 0 for m in range(self.p2))

    @property
    def zero_shift(self) -> tuple[int, ...]:
        return (0,) * self.p2

    @property
    def zero_deriv(self) -> tuple[int, ...]:
        return (0,) * self.p1

    def header(self) -> list[str]:
        lines = []
        if self.continuous:
            lines.append("continuous " + " ".join(self.continuous))
        if self.discrete:
            lines.append("discrete " + " ".join(self.discrete))
        lines.append("dependent " + " ".join(self.dependent))
        if self.auxiliary:
            lines.append("auxiliary " + " ".join(self.auxiliary))
        plain = [p for p in self.parameters if p not in self.positive]
        if plain:
            lines.append("parameter " + " ".join(plain))
        if self.positive:
            lines.append("parameter positive " + " ".join(self.positive))
        for fname, args in self.functions.items():
            lines.append(f"function {fname}({', '.join(args)})")
        return lines

    def with_auxiliary(self, names: Sequence[str] | None = None) -> "Context":
        """Copy of this context with auxiliary fields (``v`` or ``v1..vq``, else ``w``, ...)."""
        if self.auxiliary:
            return self
        if names is None:
            taken = set(self.continuous + self.discrete + self.dependent + self.parameters
                        + list(self.functions))
            stem = next(s for s in ("v", "w", "z", "aux") if s not in taken
                        and not any(t.startswith(s) and t[len(s):].isdigit() for t in taken))
            names = [stem] if self.q == 1 else [f"{stem}{k + 1}" for k in range(self.q)]
        return Context(list(self.continuous), list(self.discrete), list(self.dependent),
                       list(names), list(self.parameters), list(self.positive),
                       dict(self.functions))


# ---------------------------------------------------------------------------
# normalization

def _is_minus_one(b) -> bool:
    return b == sp.Integer(-1)


def fold_parity(e: sp.Expr) -> sp.Expr:
    """Rewrite (-1)^(c0 + c1 n1 + ...) as +-(-1)^n1 ... with odd c_i only."""
    e = sp.sympify(e)
    if not e.has(sp.Integer(-1)):
        return e

    def fix(p):
        exp = sp.expand(p.exp)
        coeffs = exp.as_coefficients_dict()
        sign = 1
        factors = []
        for term, c in coeffs.items():
            if not c.is_integer:
                return p
            if term == 1:
                if int(c) % 2:
                    sign = -sign
            elif term.is_Symbol and term.is_integer:
                if int(c) % 2:
                    factors.append(sp.Pow(-1, term, evaluate=False))
            else:
                return p
        out = sp.Integer(sign)
        for f in factors:
            out = out * f
        return out

    return e.replace(lambda a: a.is_Pow and _is_minus_one(a.base) and not a.exp.is_Number, fix)


def _merge_exp(e: sp.Expr) -> sp.Expr:
    if not e.has(sp.exp):
        return e
    return fold_parity(sp.powsimp(e, combine="exp"))


def _has_denominator(e: sp.Expr) -> bool:
    for p in e.atoms(sp.Pow):
        if p.exp.is_negative and p.base.free_symbols and not _is_minus_one(p.base):
            return True
    return False


def _canonical_den(den):
    """Factored denominator with a positive leading coefficient."""
    if not den.free_symbols:
        return den
    f = sp.factor(den)
    return f


class _NotRational(Exception):
    pass


def _field_fraction(e):
    """(num, den) of ``e`` computed in a sparse rational function field.

    Every subexpression that is not a sum, product or integer power becomes a
    generator; ``exp(c*t)`` with integer ``c`` is taken as the c-th power of
    ``exp(t)`` so reciprocal exponentials cancel.  Avoids expanding nested
    rational trees the way ``cancel`` does.
    """
    from sympy.polys.fields import field

    gens: dict = {}

    def key(x):
        if isinstance(x, sp.exp):
            c, t = x.args[0].as_coeff_Mul()
            if c.is_Integer and c != 0:
                return sp.exp(t), int(c)
        return x, 1

    def collect(x):
        if x.is_Number:
            if not x.is_Rational:
                raise _NotRational(x)
            return
        if x.is_Add or x.is_Mul:
            for a in x.args:
                collect(a)
            return
        if x.is_Pow and x.exp.is_Integer:
            collect(x.base)
            return
        g, _ = key(x)
        if g not in gens:
            gens[g] = sp.Dummy()

    collect(e)
    if not gens:
        return sp.fraction(e)
    order = sorted(gens, key=sp.default_sort_key)
    K, *xs = field([gens[g] for g in order], sp.QQ)
    val = dict(zip(order, xs))
    memo: dict = {}

    def ev(x):
        if x in memo:
            return memo[x]
        if x.is_Number:
            r = K(sp.QQ.convert(x))
        elif x.is_Add:
            r = K(0)
            for a in x.args:
                r = r + ev(a)
        elif x.is_Mul:
            r = K(1)
            for a in x.args:
                r = r * ev(a)
        elif x.is_Pow and x.exp.is_Integer:
            b = ev(x.base)
            if b == 0 and x.exp < 0:
                raise ExprError("division by zero")
            r = b ** int(x.exp)
        else:
            g, c = key(x)
            r = val[g] ** c
        memo[x] = r
        return r

    f = ev(e)
    back = {gens[g]: g for g in order}
    return f.numer.as_expr().xreplace(back), f.denom.as_expr().xreplace(back)


def normalize(e) -> sp.Expr:
    """Canonical form: expanded numerator over expanded denominator.

    Sums are flattened and like terms collected, products of exponentials
    are merged into one ``exp`` per monomial, and parity tokens are folded.
    Transcendental arguments are compared structurally after expansion.
    """
    e = sp.sympify(e)
    if e.has(sp.zoo, sp.nan):
        raise ExprError("division by zero")
    if e.is_Number:
        return e
    e = fold_parity(e)
    if _has_denominator(e):
        e = e.replace(lambda a: isinstance(a, sp.exp), lambda a: sp.exp(sp.expand(a.args[0])))
        try:
            num, den = _field_fraction(e)
        except _NotRational:
            num, den = sp.fraction(sp.cancel(e))
        if den == 0:
            raise ExprError("division by zero")
        num = _merge_exp(fold_parity(sp.expand(num, power_exp=True, log=False)))
        den = fold_parity(sp.expand(den, power_exp=True, log=False))
        if not den.is_Add:
            e = _merge_exp(sp.expand(num / den, power_exp=True, log=False))
        else:
            e = num / _canonical_den(den)
    else:
        e = sp.expand(e, power_exp=True, log=False)
        e = _merge_exp(fold_parity(e))
    if e.has(sp.zoo, sp.nan):
        raise ExprError("division by zero")
    return e


def is_zero(e) -> bool:
    return normalize(e) == 0


def partial(e, a: Jet | sp.Symbol) -> sp.Expr:
    """Formal partial derivative with all jets treated as independent coordinates."""
    return normalize(sp.diff(sp.sympify(e), a))


def substitute(e, bindings: Mapping, ctx: Context | None = None) -> sp.Expr:
    """Simultaneous replacement of atoms, followed by normalization.

    When an auxiliary field appears among the keys, every occurring jet of
    that field must be bound; the caller supplies shifted/derived bindings.
    """
    e = sp.sympify(e)
    bound_fields = {k.field for k in bindings if isinstance(k, Jet)}
    if ctx is not None:
        aux_bound = bound_fields.intersection(ctx.auxiliary)
        for a in jets(e, aux_bound):
            if a not in bindings:
                raise ExprError(f"unbound shifted auxiliary atom {render(a, ctx)}")
    return normalize(e.xreplace({k: sp.sympify(v) for k, v in bindings.items()}))


# ---------------------------------------------------------------------------
# rendering

class _Printer(sp.printing.str.StrPrinter):
    def __init__(self, ctx: Context | None):
        super().__init__({"order": "lex"})
        self.ctx = ctx

    def _print_Jet(self, a):
        if not any(a.deriv) and not any(a.shift):
            return a.field
        return a.name

    def _print_Symbol(self, s):
        if isinstance(s, Jet):
            return self._print_Jet(s)
        return s.name

    def _print_Pow(self, expr, rational=False):
        b, e = expr.as_base_exp()
        if _is_minus_one(b):
            return f"(-1)^{self.parenthesize(e, 1000)}"
        if e == -1:
            return f"1/{self.parenthesize(b, 1000, strict=True)}"
        if e.is_Rational and e.is_negative:
            return f"1/{self.parenthesize(b, 1000, strict=True)}^{self._rat(-e)}"
        if e.is_Rational:
            return f"{self.parenthesize(b, 1000, strict=True)}^{self._rat(e)}"
        return f"{self.parenthesize(b, 1000, strict=True)}^({self._print(e)})"

    def _rat(self, r):
        if r.q == 1:
            return str(r.p)
        return f"({r.p}/{r.q})"

    def _print_Rational(self, r):
        if r.q == 1:
            return str(r.p)
        return f"{r.p}/{r.q}"

    def _print_Half(self, r):
        return "1/2"

    def _print_ExpBase(self, e):
        return f"exp({self._print(e.exp)})"

    def _print_exp(self, e):
        return f"exp({self._print(e.args[0])})"

    def _print_log(self, e):
        return f"ln({self._print(e.args[0])})"

    def _print_Exp1(self, e):
        return "exp(1)"

    def _print_Derivative(self, d):
        args = [self._print(d.expr)]
        for v, k in d.variable_count:
            args.extend([self._print(v)] * int(k))
        return f"diff({', '.join(args)})"


def render(e, ctx: Context | None = None) -> str:
    """Grammar-conformant text for ``e`` (re-parses to an equal expression)."""
    return _Printer(ctx).doprint(sp.sympify(e))


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()\[\];,=])
""", re.VERBOSE)

_FUNCS = {"exp": sp.exp, "ln": sp.log, "sin": sp.sin, "cos": sp.cos}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    raw = text.encode("utf-8")
    # work on str but report byte offsets
    byte_at = _byte_offsets(text)
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", byte_at[pos], text)
        kind = m.lastgroup
        if kind != "ws":
            if kind == "num" and not m.group().isdigit():
                raise ParseError(f"floating constant {m.group()!r} not allowed; use a rational",
                                 byte_at[pos], text)
            toks.append(_Tok(kind, m.group(), byte_at[pos]))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw)))
    return toks


def _byte_offsets(text: str) -> list[int]:
    out, b = [], 0
    for ch in text:
        out.append(b)
        b += len(ch.encode("utf-8"))
    out.append(b)
    return out


class _Parser:
    def __init__(self, text: str, ctx: Context):
        self.text = text
        self.ctx = ctx
        self.toks = _tokenize(text)
        self.i = 0

    # helpers
    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, s: str) -> _Tok:
        t = self.take()
        if t.text != s:
            raise ParseError(f"expected {s!r}, found {t.text or 'end of input'!r}", t.pos, self.text)
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.pos, self.text)

    # grammar: expr := term (('+'|'-') term)*
    def parse(self) -> sp.Expr:
        e = self.expr()
        if self.peek().kind != "end":
            self.error(f"unexpected {self.peek().text!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            r = self.term()
            e = e + r if op == "+" else e - r
        return e

    def term(self):
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take()
            r = self.unary()
            if op.text == "*":
                e = e * r
            else:
                if sp.sympify(r) == 0:
                    self.error("division by the literal zero", op)
                e = e / r
        return e

    def unary(self):
        if self.peek().text == "-":
            self.take()
            return -self.unary()
        if self.peek().text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().text == "^":
            op = self.take()
            expo = self.unary()
            return self._pow(base, expo, op)
        return base

    def _pow(self, base, expo, op):
        expo = sp.sympify(expo)
        base = sp.sympify(base)
        if _is_minus_one(base):
            coeffs = sp.expand(expo).as_coefficients_dict()
            ok = all(c.is_integer and (m == 1 or m in self.ctx.ns) for m, c in coeffs.items())
            if ok:
                return fold_parity(sp.Pow(-1, expo))
            self.error("(-1)^k requires an integer-linear combination of discrete variables", op)
        if not expo.is_Rational:
            self.error("exponent must be a rational constant", op)
        if base == 0 and expo.is_negative:
            self.error("division by the literal zero", op)
        return base ** expo

    def int_list(self, closers: str) -> list[int]:
        vals = []
        if self.peek().text in closers:
            return vals
        while True:
            sign = 1
            if self.peek().text in "+-" and self.peek().kind == "op":
                sign = -1 if self.take().text == "-" else 1
            t = self.take()
            if t.kind != "num":
                self.error("expected integer index", t)
            vals.append(sign * int(t.text))
            if self.peek().text == ",":
                self.take()
                continue
            return vals

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return sp.Integer(int(t.text))
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind != "name":
            self.error(f"unexpected {t.text or 'end of input'!r}", t)
        name = t.text
        ctx = self.ctx
        if name in _FUNCS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return _FUNCS[name](arg)
        if name == "diff":
            return self._diff(t)
        if name in ("D", "S") and self.peek().text == "[":
            return self._operator(name, t)
        if name in ctx.fields:
            if self.peek().text == "[":
                self.take()
                d = self.int_list(";]")
                if self.peek().text == ";":
                    self.take()
                    s = self.int_list("]")
                else:
                    s = []
                    if ctx.p2 and not ctx.p1:
                        d, s = [], d
                close = self.expect("]")
                if len(d) != ctx.p1 or len(s) != ctx.p2:
                    self.error(f"index arity mismatch for {name}: expected ({ctx.p1};{ctx.p2}),"
                               f" got ({len(d)};{len(s)})", t)
                if any(k < 0 for k in d):
                    self.error(f"negative derivative index for {name}", t)
                del close
                return Jet(name, d, s)
            return ctx.base(name)
        if name in ctx.continuous:
            return sp.Symbol(name, real=True)
        if name in ctx.discrete:
            return sp.Symbol(name, integer=True)
        if name in ctx.parameters:
            return ctx.param(name)
        if name in ctx.functions:
            self.expect("(")
            args = [self.expr()]
            while self.peek().text == ",":
                self.take()
                args.append(self.expr())
            self.expect(")")
            if len(args) != len(ctx.functions[name]):
                self.error(f"function {name} takes {len(ctx.functions[name])} arguments", t)
            return ctx.function(name)(*args)
        self.error(f"unknown identifier {name!r}", t)

    def _diff(self, t):
        self.expect("(")
        e = self.expr()
        vs = []
        while self.peek().text == ",":
            self.take()
            vs.append(self.expr())
        self.expect(")")
        if not vs:
            self.error("diff needs at least one variable", t)
        return sp.diff(e, *vs)

    def _operator(self, name, t):
        from . import calculus  # noqa: local import avoids a cycle

        self.take()  # '['
        v = self.take()
        if v.kind != "name":
            self.error("expected variable name", v)
        k = 1
        if self.peek().text == ",":
            self.take()
            (k,) = self.int_list("]")
        self.expect("]")
        self.expect("(")
        e = self.expr()
        self.expect(")")
        if name == "D":
            if v.text not in self.ctx.continuous:
                self.error(f"D[...] needs a continuous variable, got {v.text!r}", v)
            if k < 0:
                self.error("negative derivative order", v)
            i = self.ctx.continuous.index(v.text)
            for _ in range(k):
                e = calculus.total_derivative(e, i, self.ctx)
            return e
        if v.text not in self.ctx.discrete:
            self.error(f"S[...] needs a discrete variable, got {v.text!r}", v)
        j = self.ctx.discrete.index(v.text)
        return calculus.shift(e, self.ctx.sunit(j, k), self.ctx)


def parse(text: str, ctx: Context) -> sp.Expr:
    """Parse the infix grammar into a normalized expression."""
    return normalize(_Parser(text, ctx).parse())


def parse_raw(text: str, ctx: Context) -> sp.Expr:
    """Parse without normalizing (keeps the user's factored form)."""
    return _Parser(text, ctx).parse()


def to_fraction(r) -> Fraction:
    r = sp.Rational(r)
    return Fraction(int(r.p), int(r.q))

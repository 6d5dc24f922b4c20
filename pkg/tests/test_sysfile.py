import pytest

from ddnoether.expr import normalize, parse
from ddnoether.runner import corpus_dir
from ddnoether.sysfile import SysFileError, UnknownName, load, loads

VOLTERRA = """ddnoether/1
continuous t
discrete n
dependent u
equation F1: u[1;0]/u - u[0;1] + u[0;-1]  lead u[1;0] = u*(u[0;1]-u[0;-1])
field X1: xi = -t; phi = u
cl law1: P1 = u; P2 = -u*u[0;-1]; Q = u
"""


def test_reads_declarations():
    sf = loads(VOLTERRA)
    assert list(sf.ctx.dependent) == ["u"]
    X = sf.vector_field("X1")
    assert normalize(X.xi[0] + sf.ctx.xs[0]) == 0
    cl = sf.law("law1")
    assert normalize(cl.P.p2[0] - parse("-u*u[0;-1]", sf.ctx)) == 0
    assert len(sf.system().equations) == 1


def test_render_is_a_fixed_point():
    text = loads(VOLTERRA).render()
    assert loads(text).render() == text


@pytest.mark.parametrize("path", sorted(corpus_dir().glob("*.dde")), ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    text = load(path).render()
    assert loads(text).render() == text


def test_missing_header():
    with pytest.raises(SysFileError, match="header") as e:
        loads("continuous t\n")
    assert e.value.line == 1


def test_bad_expression_has_line_and_byte():
    text = VOLTERRA.replace("phi = u", "phi = u + * u")
    with pytest.raises(SysFileError) as e:
        loads(text)
    assert e.value.line == 6
    # the offset points into the sixth line, at the stray operator
    assert text.encode()[e.value.offset:e.value.offset + 1] == b"*"


def test_byte_offsets_count_utf8():
    text = "ddnoether/1\n# é\ncontinuous t\ndependent u\nfield X: xi = é; phi = u\n"
    with pytest.raises(SysFileError) as e:
        loads(text)
    assert text.encode()[e.value.offset:].startswith("é".encode())


def test_duplicate_name():
    with pytest.raises(SysFileError, match="duplicate"):
        loads(VOLTERRA + "field X1: xi = 1; phi = 0\n")


def test_unknown_keyword():
    with pytest.raises(SysFileError, match="unknown keyword"):
        loads(VOLTERRA + "widget W: 1\n")


def test_context_after_equations_rejected():
    with pytest.raises(SysFileError, match="must come before"):
        loads(VOLTERRA + "discrete m\n")


def test_unknown_names():
    sf = loads(VOLTERRA)
    for get in (sf.vector_field, sf.law, sf.lagrangian):
        with pytest.raises(UnknownName):
            get("nope")


def test_inline_substitution():
    sub = loads(VOLTERRA).substitution("v = -u")
    assert sub.classify() == "quasi"


def test_checks_are_collected():
    sf = loads(VOLTERRA + "check cl law1 exact\ncheck symmetry X1 caseI\n")
    assert [c.kind for c in sf.checks] == ["cl", "symmetry"]

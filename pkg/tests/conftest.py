import pytest

from ddnoether.expr import Context
from ddnoether.runner import corpus_dir
from ddnoether.sysfile import load

# filled by tests/test_acceptance.py: number -> (ok, title, detail)
ACCEPTANCE: dict = {}


@pytest.fixture
def ctx_tn():
    return Context(["t"], ["n"], ["u"])


@pytest.fixture
def ctx_n():
    return Context([], ["n"], ["u"])


@pytest.fixture
def ctx_tx():
    return Context(["t", "x"], [], ["u"])


@pytest.fixture
def ctx_mn():
    return Context([], ["m", "n"], ["u"])


@pytest.fixture
def fixture_file():
    return lambda name: load(corpus_dir() / f"{name}.dde")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {title}"
                      + (f"  [{detail}]" if detail else ""))

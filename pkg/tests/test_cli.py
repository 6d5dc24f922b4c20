import io
import json
import shutil
import subprocess
import sys

import pytest

from ddnoether.cli import run
from ddnoether.runner import corpus_dir, run_corpus

VOLTERRA = str(corpus_dir() / "volterra.dde")
TODA = str(corpus_dir() / "toda.dde")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_parse_prints_canonical_text():
    code, out, _ = call("parse", VOLTERRA)
    assert code == 0 and out.startswith("ddnoether/1")


def test_symmetry_positive():
    code, out, _ = call("check-symmetry", VOLTERRA, "--field", "X1")
    assert code == 0 and "symmetry (caseI)" in out and "symmetry (caseII)" in out


def test_negative_verdict_prints_residue(tmp_path):
    f = tmp_path / "v.dde"
    f.write_text(open(VOLTERRA).read() + "field Bad: xi = 0; phi = u^2\n")
    code, out, _ = call("check-symmetry", str(f), "--field", "Bad", "--mode", "caseI")
    assert code == 1 and "residue" in out


def test_solve_point():
    code, out, _ = call("solve-point", VOLTERRA)
    assert code == 0 and out.count("generator") == 2 and "free 1" in out


def test_verify_and_noether():
    assert call("verify-cl", VOLTERRA, "--cl", "law1")[:2] == (0, "exact-identity\n")
    code, out, _ = call("noether", TODA, "--field", "Q3")
    assert code == 0 and "P1" in out and out.rstrip().endswith("exact-identity")


def test_self_adjoint_and_adjoint_cl():
    code, out, _ = call("check-self-adjoint", VOLTERRA, "--sub", "v = -u")
    assert code == 0 and "self-adjoint (quasi)" in out
    code, out, _ = call("check-self-adjoint", VOLTERRA, "--sub", "v = u^2")
    assert code == 1 and "residue" in out
    code, out, _ = call("adjoint-cl", VOLTERRA, "--field", "X1", "--sub", "S1")
    assert code == 0 and "exact" in out


def test_adjoint_system():
    code, out, _ = call("adjoint", VOLTERRA)
    assert code == 0 and out.startswith("formal Lagrangian: ")


def test_numeric_verify_is_deterministic():
    a = call("numeric-verify", VOLTERRA, "--cl", "law1", "--t-end", "0.1")
    b = call("numeric-verify", VOLTERRA, "--cl", "law1", "--t-end", "0.1")
    assert a == b and a[0] == 0
    d = json.loads(a[1].splitlines()[-1])
    assert d["seed"] == 42 and d["ring"] == 20


@pytest.mark.parametrize("argv", [
    ("frobnicate",),
    ("check-symmetry", VOLTERRA),                       # missing --field
    ("check-symmetry", VOLTERRA, "--field", "Nope"),    # unknown name
    ("parse", "/nonexistent/file.dde"),
])
def test_usage_errors(argv):
    assert call(*argv)[0] == 2


def test_parse_error_reports_location(tmp_path):
    f = tmp_path / "bad.dde"
    f.write_text("ddnoether/1\ncontinuous t\ndependent u\nfield X: xi = 1 +; phi = 0\n")
    code, _, err = call("parse", str(f))
    assert code == 2 and "line 4" in err


def test_empty_corpus_warns(tmp_path):
    code, out, _ = call("corpus", "--dir", str(tmp_path))
    assert "no fixtures" in out


def test_corrupted_fixture_fails_one_row(tmp_path):
    shutil.copy(VOLTERRA, tmp_path / "volterra.dde")
    text = (tmp_path / "volterra.dde").read_text()
    # flip one sign in the expected adjoint equation
    (tmp_path / "volterra.dde").write_text(
        text.replace("check adjoint: -v[1;0]/u + v[0;1]", "check adjoint: -v[1;0]/u - v[0;1]"))
    rows = run_corpus(tmp_path, jobs=1)
    bad = [r for r in rows if not r.ok]
    assert len(bad) == 1 and bad[0].check.startswith("check adjoint")
    assert "residue 2*v[0;1]" in bad[0].detail


def test_bundled_corpus_passes():
    code, out, _ = call("corpus")
    assert code == 0, out
    assert out.rstrip().endswith("checks passed")
    assert call("corpus") == (code, out, "")


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "ddnoether.cli", "verify-cl", VOLTERRA, "--cl", "law1"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "exact-identity"

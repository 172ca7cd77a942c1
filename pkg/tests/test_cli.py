import json
import subprocess
import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

from procmetric.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    return code, json.loads(out)


def test_identical_terms_are_at_distance_zero(capsys):
    code, doc = run_json(capsys, "dist", "--left", "a.0", "--right", "a.0", "--lambda", "1", "--exact")
    assert code == 0 and doc["status"] == "ok"
    assert doc["result"]["value"] == "0/1" and doc["result"]["exact"] is True


def test_witness_distance(capsys):
    code, out, _ = run(capsys, "dist", "--left", "a.([3/4]eps (+) [1/4]0)", "--right", "a.eps",
                       "--lambda", "1", "--exact")
    assert code == 0 and out.startswith("1/4")


def test_depth_limited_distance_reports_bracket(capsys):
    code, doc = run_json(capsys, "dist", "--left", "a.b.c.d.0", "--right", "a.b.c.e.0",
                         "--lambda", "1/2", "--upto", "3")
    assert code == 0
    assert doc["result"]["value"] == "0/1" and doc["result"]["upper"] == "1/8"


def test_bound_command(capsys):
    code, out, _ = run(capsys, "bound", "--op", "infiter", "--lambda", "4/5", "--eps", "1/10")
    assert code == 0 and out.split()[0] == "1/3"
    code, doc = run_json(capsys, "bound", "--op", "finiter", "--n", "2", "--lambda", "1", "--eps", "1/4")
    assert doc["result"]["bound"] == "7/16" and doc["result"]["lipschitz"] == "2/1"


def test_witness_verification(capsys):
    code, doc = run_json(capsys, "witness", "--op", "seq", "--lambda", "1", "--eps", "1/4,1/3", "--verify")
    assert code == 0 and doc["result"]["verification"]["tight"] is True
    assert doc["result"]["verification"]["engine_lower"] == "1/2"


def test_brp_solve(capsys):
    code, doc = run_json(capsys, "brp", "solve", "--target", "0.99", "--n", "20", "--t", "1")
    assert code == 0 and abs(doc["result"]["epsilon"] - 0.01052) < 1e-4


def test_brp_report_with_verification(capsys):
    code, doc = run_json(capsys, "brp", "report", "--n", "1", "--t", "1", "--p", "1/10", "--q", "1/10",
                         "--verify")
    assert code == 0 and doc["result"]["verification"]["ok"] is True
    assert doc["result"]["ch_bound"]["fraction"] == "19/100"


def test_parse_error_exit_code(capsys):
    code, doc = run_json(capsys, "dist", "--left", "a.(", "--right", "a.0", "--lambda", "1", "--exact")
    assert code == 1 and doc["status"] == "parse_error" and "error" in doc


def test_usage_error_exit_code(capsys):
    code, _, err = run(capsys, "dist", "--left", "a.0")
    assert code == 1 and "error" in err


def test_budget_exit_code_carries_partial_interval(capsys):
    code, doc = run_json(capsys, "dist", "--left", "bang(a.([1/2]eps (+) [1/2]0))", "--right", "bang(a.eps)",
                         "--lambda", "1/2", "--exact", "--budget", "30")
    assert code == 2 and doc["status"] == "budget_exceeded"
    part = doc["result"]["partial"]
    assert 0 <= F(part["lower"]) <= F(part["upper"]) <= 1


def test_domain_error_exit_code(capsys):
    code, doc = run_json(capsys, "bound", "--op", "seq", "--lambda", "1/2", "--eps", "3/4,0")
    assert code == 3 and doc["status"] == "domain_error"
    code, _, _ = run(capsys, "brp", "report", "--n", "0", "--t", "1", "--p", "0", "--q", "0")
    assert code == 3


def test_verification_failure_exit_code(capsys, monkeypatch):
    import dataclasses

    from procmetric import bounds

    real = bounds.verify_tightness

    def broken(*args, **kwargs):
        return dataclasses.replace(real(*args, **kwargs), tight=False)

    monkeypatch.setattr(bounds, "verify_tightness", broken)
    code, doc = run_json(capsys, "witness", "--op", "alt", "--lambda", "1", "--eps", "1/4,0", "--verify")
    assert code == 4 and doc["status"] == "verification_failed"


def test_parse_reads_stdin(capsys, monkeypatch):
    import io

    monkeypatch.setattr(sys, "stdin", io.StringIO("a.0 + b.eps"))
    code, doc = run_json(capsys, "parse", "-")
    assert code == 0 and doc["result"]["term"] == "a.0 + b.eps"


def _fractions(node):
    if isinstance(node, dict):
        for v in node.values():
            yield from _fractions(v)
    elif isinstance(node, list):
        for v in node:
            yield from _fractions(v)
    elif isinstance(node, str) and "/" in node and node.replace("/", "").lstrip("-").isdigit():
        yield node


def test_json_fractions_round_trip(capsys):
    _, doc = run_json(capsys, "brp", "report", "--n", "3", "--t", "2", "--p", "1/10", "--q", "1/20")
    found = list(_fractions(doc))
    assert found
    for text in found:
        q = F(text)
        assert f"{q.numerator}/{q.denominator}" == text
    assert float(F(doc["result"]["brp_bound"]["fraction"])) == doc["result"]["brp_bound"]["decimal"]


def _golden_cases():
    terms = (GOLDEN / "corpus.txt").read_text().splitlines()
    for i, term in enumerate(terms):
        yield f"derive_{i:02d}.json", ["derive", "--term", term]
        yield f"derive_{i:02d}_depth2.json", ["derive", "--term", term, "--depth", "2"]


@pytest.mark.parametrize("name, argv", list(_golden_cases()), ids=lambda x: x if isinstance(x, str) else "")
def test_derive_matches_golden(capsys, name, argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    assert code == 0
    assert out == (GOLDEN / name).read_text()


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "procmetric.cli", "bound", "--op", "alt", "--lambda", "1",
                           "--eps", "1/4,1/2"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("1/2")

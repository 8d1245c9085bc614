import csv
import io
from pathlib import Path

import pytest

from cqdyn import cli

FIXTURES = Path(__file__).parent / "fixtures"


def run(*argv):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out)
    return code, out.getvalue()


def test_analyze_running_example():
    code, text = run("analyze", FIXTURES / "q1.query")
    assert code == 0
    assert text.splitlines()[0] == "height=3 dim=4 class=not-free-connex"


def test_analyze_wide_and_cyclic():
    assert run("analyze", FIXTURES / "wide.query")[1].startswith("height=5 dim=6")
    assert "class=cyclic" in run("analyze", FIXTURES / "triangle.query")[1].splitlines()[0]


def test_analyze_free_connex_renders_tree(tmp_path):
    path = tmp_path / "q.query"
    path.write_text("Q(x1) <- R1(x1, x2), R2(x2, x3), R3(x3)\n")
    code, text = run("analyze", path, "--tree")
    assert code == 0
    assert "tree_valid=true" in text


def test_analyze_csv_columns():
    code, text = run("analyze", FIXTURES / "q1.query", "--csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["class", "height", "dimension", "chordless", "q_chordless", "free_connex"]
    assert rows[1] == ["not-free-connex", "3", "4", "6", "3", "false"]


def test_parse_errors_and_usage_exit_two(tmp_path):
    bad = tmp_path / "bad.query"
    bad.write_text("Q(x) <- R(x) <- S(x)\n")
    assert run("analyze", bad)[0] == 2
    assert run("analyze", tmp_path / "missing.query")[0] == 2
    assert run("frobnicate")[0] == 2
    assert run("verify")[0] == 2


def test_gen_then_run_passes(tmp_path):
    script = tmp_path / "oumv.txt"
    assert run("gen", "oumv-star", "--n", 8, "--d", 3, "--rounds", 20, "--seed", 3, "-o", script)[0] == 0
    report = tmp_path / "report.csv"
    code, text = run("run", script, "--csv", report)
    assert code == 0
    assert "checkpoints=20 passed=20" in text
    with open(report) as fh:
        header = next(csv.reader(fh))
    assert header == cli.RUN_COLUMNS


def test_run_reports_divergence(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("#q attrs: x1\n#q output: x1\n#q R1(x1)\n+ R1 4\n? 2\n")
    assert run("run", script)[0] == 1


def test_run_empty_script(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("#q attrs: x1 x2\n#q output: x2\n#q R1(x1, x2)\n#q R2(x1)\n")
    code, text = run("run", script)
    assert code == 0 and "checkpoints=0" in text


def test_run_rejects_non_star(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("#q Q(x1) <- R1(x1, x2), R2(x2, x3)\n")
    assert run("run", script)[0] == 2


def test_verify_commands():
    code, text = run("verify", "--equivalence", "--attrs", 6, "--trials", 40, "--seed", 1, "--workers", 2)
    assert code == 0 and "violations=0" in text
    code, text = run("verify", "--engine", "--d", 3, "--events", 1500, "--seed", 7)
    assert code == 0 and "mismatches=0" in text


def test_verify_engine_on_empty_script(tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("#q attrs: x1\n#q output: x1\n#q R1(x1)\n")
    assert run("verify", "--engine", "--script", script)[0] == 0


def test_bench_csv_is_stable(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert run("bench", "--d", 2, "--events", 600, "--every", 100, "--seed", 5, "-o", path)[0] == 0
    assert first.read_text() == second.read_text()
    lines = first.read_text().splitlines()
    assert lines[0] == "update,db_size,h,ops"
    assert len(lines) == 7


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("CQDYN_SEED", "42")
    assert cli.resolve_seed(None, "x") == 42
    assert cli.resolve_seed(3, "x") == 3
    monkeypatch.delenv("CQDYN_SEED")
    assert cli.resolve_seed(None, "x") == cli.resolve_seed(None, "x")

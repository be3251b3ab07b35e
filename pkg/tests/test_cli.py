import json
from pathlib import Path

import pytest

from qcf.cli import main

REPO = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).resolve().parent / "golden"

GOLDEN_CASES = {
    "example1_passive.json": ["query", "models/example1.qsm", "models/example_passive.cf", "--report", "json"],
    "example2_passive.txt": ["query", "models/example2.qsm", "models/example_passive.cf"],
    "example1_ambiguous.json": ["query", "models/example1.qsm", "models/example_ambiguous.cf", "--report", "json"],
    "example2_do.json": ["query", "models/example2.qsm", "models/example_do.cf", "--report", "json"],
    "example1_active_tilted.txt": ["query", "models/example1.qsm", "models/example_active_tilted.cf"],
    "bell_demo.txt": ["bell-demo"],
    "compare_xor.txt": ["compare", "models/xor_chain.psm", "models/xor_query.cf"],
    "bell_q1_do.txt": ["query", "models/bell.qsm", "models/bell_q1_do.cf"],
    "validate_example1.txt": ["validate", "models/example1.qsm", "--seed", "7"],
}


@pytest.fixture(autouse=True)
def _repo_cwd(monkeypatch):
    monkeypatch.chdir(REPO)


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES), ids=lambda n: n)
def test_golden_outputs(name, capsys):
    code = main(GOLDEN_CASES[name])
    out = capsys.readouterr().out
    assert code == 0
    assert out == (GOLDEN / name).read_text(encoding="utf-8")


def test_query_multiple_files_with_jobs(capsys):
    code = main(
        [
            "query",
            "models/example1.qsm",
            "models/example_passive.cf",
            "models/example_do.cf",
            "--jobs",
            "2",
            "--report",
            "json",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    # two JSON objects in input order
    chunks = out.strip().split("\n}\n{")
    assert len(chunks) == 2
    first = json.loads(chunks[0] + "\n}")
    assert first["query"] == "models/example_passive.cf"
    assert first["result"] == 1.0


def test_counterpossible_exit_code(capsys):
    code = main(
        [
            "query",
            "models/example2.qsm",
            "models/example_passive.cf",
            "--fail-on-counterpossible",
        ]
    )
    out = capsys.readouterr().out
    assert code == 3
    assert "result: *" in out


def test_counterpossible_without_flag_is_ok(capsys):
    code = main(["query", "models/example2.qsm", "models/example_passive.cf"])
    capsys.readouterr()
    assert code == 0


def test_validate_classical(capsys):
    code = main(["validate", "models/xor_chain.psm"])
    out = capsys.readouterr().out
    assert code == 0
    assert "classical model ok" in out


def test_validate_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.qsm"
    bad.write_text("qsm {\n  node A { in 2 out }\n}\n")
    code = main(["validate", str(bad)])
    capsys.readouterr()
    assert code == 2


def test_semantic_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.qsm"
    bad.write_text(
        'qsm {\n  node A { in 2 out 2 }\n  wire A.out -> Q.in\n}\n'
    )
    code = main(["validate", str(bad)])
    capsys.readouterr()
    assert code == 2


def test_usage_error_exit_code(capsys):
    assert main(["no-such-command"]) == 64
    capsys.readouterr()


def test_classical_command(capsys):
    code = main(["classical", "models/xor_chain.psm", "models/xor_query.cf"])
    out = capsys.readouterr().out
    assert code == 0
    assert "result: 1.0" in out


def test_lift_emit_roundtrip(tmp_path, capsys):
    target = tmp_path / "lifted.qsm"
    code = main(["lift", "models/xor_chain.psm", "--emit-qsm", str(target)])
    capsys.readouterr()
    assert code == 0
    assert target.exists()
    code = main(["validate", str(target)])
    out = capsys.readouterr().out
    assert code == 0
    assert "result: valid" in out


def test_eps_env_override(monkeypatch, capsys):
    monkeypatch.setenv("QCF_EPS", "1e-3")
    code = main(["validate", "models/example1.qsm"])
    capsys.readouterr()
    assert code == 0
    monkeypatch.setenv("QCF_EPS", "not-a-number")
    code = main(["validate", "models/example1.qsm"])
    assert code == 0  # malformed value is ignored with a warning
    capsys.readouterr()


def test_lift_emit_then_query_counterfactual(tmp_path, capsys):
    # the full loop: lift a classical model, emit it, query the emitted file
    # with a do-intervention, and compare with the classical three-step value
    target = tmp_path / "lifted.qsm"
    assert main(["lift", "models/xor_chain.psm", "--emit-qsm", str(target)]) == 0
    capsys.readouterr()

    query = tmp_path / "lifted_query.cf"
    query.write_text(
        """query quantum {
  evidence {
    setting V1 measure.V1
    setting V2 measure.V2
    outcome V1 "0"
    outcome V2 "0"
  }
  counterfactual {
    setting V2 measure.V2
    do V1 "1" state matrix [[[0, 0], [0, 0]], [[0, 0], [1, 0]]]
    antecedent V1 "1"
    consequent V2 "1"
  }
}
"""
    )
    code = main(["query", str(target), str(query), "--report", "json"])
    out = capsys.readouterr().out
    assert code == 0
    report = json.loads(out)
    assert report["kind"] == "do-interventional"
    assert abs(report["result"] - 1.0) < 1e-9  # matches the classical value


def test_query_kind_mismatch_is_usage_error(capsys):
    code = main(["query", "models/xor_chain.psm", "models/xor_query.cf"])
    capsys.readouterr()
    assert code == 64


def test_subprocess_entry_point(tmp_path):
    import subprocess
    import sys

    run = subprocess.run(
        [sys.executable, "-m", "qcf.cli", "query", "models/example2.qsm",
         "models/example_passive.cf", "--fail-on-counterpossible"],
        capture_output=True,
        text=True,
        cwd=REPO,
    )
    assert run.returncode == 3
    assert "result: *" in run.stdout

    run = subprocess.run(
        [sys.executable, "-m", "qcf.cli", "bell-demo"],
        capture_output=True,
        text=True,
        cwd=REPO,
    )
    assert run.returncode == 0
    assert "0.5" in run.stdout

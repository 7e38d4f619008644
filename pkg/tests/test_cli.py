import json
import subprocess
import sys
from pathlib import Path

import pytest

from fourpc import cli

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def prog(tmp_path):
    p = tmp_path / "prog.txt"
    p.write_text("INPUT a 1\nINPUT b 2\nINPUT c 3\nADD s = a b\nMUL y = s c\nOUTPUT y\n")
    i = tmp_path / "in.json"
    i.write_text(json.dumps({"a": [1], "b": [2], "c": [3]}))
    return str(p), str(i)


def test_run_ok(prog, capsys):
    assert cli.main(["run", "--circuit", prog[0], "--inputs", prog[1]]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["outputs"] == {"y": [9]}


def test_run_fault_fair_aborts(prog, capsys):
    assert cli.main(["run", "--circuit", prog[0], "--inputs", prog[1], "--fault", "mult:y1:1"]) == 2
    assert json.loads(capsys.readouterr().out)["verdict"] == "abort"


def test_run_fault_robust_delivers(prog, tmp_path):
    out = tmp_path / "r.json"
    code = cli.main(["run", "--mode", "robust", "--circuit", prog[0], "--inputs", prog[1],
                     "--fault", "mult:y1:1", "--report", str(out)])
    rep = json.loads(out.read_text())
    assert code == 0 and rep["verdict"] == "ttp" and rep["outputs"]["y"] == [9]


def test_list_fault_sites(prog, capsys):
    assert cli.main(["run", "--circuit", prog[0], "--inputs", prog[1], "--list-fault-sites"]) == 0
    sites = capsys.readouterr().out.split()
    assert "mult:y1:1:2" in sites and len(sites) == len(set(sites))


def test_usage_and_input_errors(prog, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--circuit", prog[0]])
    assert exc.value.code == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--circuit", prog[0], "--inputs", prog[1], "--mode", "sloppy"])
    assert exc.value.code == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("FROB x\n")
    assert cli.main(["run", "--circuit", str(bad), "--inputs", prog[1]]) == 3
    assert cli.main(["run", "--circuit", prog[0], "--inputs", str(tmp_path / "missing.json")]) == 3
    assert cli.main(["run", "--circuit", prog[0], "--inputs", prog[1], "--fault", "nonsense"]) == 3
    assert "fourpc:" in capsys.readouterr().err


def test_audit(prog, tmp_path, capsys):
    rep = tmp_path / "r.json"
    cli.main(["run", "--circuit", prog[0], "--inputs", prog[1], "--report", str(rep)])
    assert cli.main(["audit", "--report", str(rep)]) == 0
    assert "ok   mult" in capsys.readouterr().out
    table = json.loads((Path(cli.__file__).parent / "data" / "cost_lemmas.json").read_text())
    table["operations"]["mult"]["pre"] = [3, 0]
    bad = tmp_path / "t.json"
    bad.write_text(json.dumps(table))
    assert cli.main(["audit", "--report", str(rep), "--expect", str(bad)]) == 1


def test_infer(tmp_path, capsys):
    samples = tmp_path / "x.json"
    samples.write_text(json.dumps([[0.5] * 8, [-1.0] * 8]))
    assert cli.main(["infer", "--model", "toy", "--inputs", str(samples), "--mode", "robust"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["labels"] == rep["cleartext_labels"]


def test_console_entry_point():
    args = [sys.executable, "-m", "fourpc.cli", "run", "--seed", "0123",
            "--circuit", str(GOLDEN / "basic.prog"), "--inputs", str(GOLDEN / "basic_inputs.json")]
    res = subprocess.run(args, capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout == (GOLDEN / "basic_report.json").read_text()

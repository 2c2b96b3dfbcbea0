import json
import subprocess
import sys

import pytest

from shorsim.cli import UsageError, format_terms, main, parse_args
from shorsim.poly import TruncatedPoly


def test_defaults():
    cfg = parse_args(["run", "table2"])
    assert cfg.order_first == ["bit"]
    assert [str(a) for a in cfg.ancillas] == ["shor0", "shor1", "shor2", "single"]
    assert cfg.max_order == 2 and cfg.engine == "pauliframe"
    cfg = parse_args(["run", "section4b"])
    assert cfg.bit_syndrome == (0, 0, 1)
    assert cfg.alpha == pytest.approx(0.39269908169872414)


def test_ancilla_selection():
    cfg = parse_args(["run", "table1-encoding", "--ancilla", "shor", "--verifications", "2", "--second-pair", "2,3"])
    assert [str(a) for a in cfg.ancillas] == ["shor2:2,3"]
    cfg = parse_args(["run", "table3", "--ancilla", "single", "--alpha", "0.3"])
    assert cfg.alpha == 0.3 and cfg.order_first == ["phase"]


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "table2", "--ancilla", "single", "--verifications", "1"],
        ["run", "table2", "--order-first", "phase"],
        ["run", "table1", "--order-first", "bit"],
        ["run", "table2", "--variant", "noisy-shor-perfect-qec"],
        ["run", "table1-shor", "--alpha", "0.1"],
        ["run", "table4", "--ancilla", "single"],
        ["run", "table2", "-K", "0"],
        ["run", "table2", "--second-pair", "2,2"],
        ["run", "section4b", "--bit-syndrome", "0,2,1"],
        ["run", "table9"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_args(argv)
    assert main(argv) == 2


def test_format_terms():
    x, y, z = (TruncatedPoly.variable(i, 1) for i in range(3))
    assert format_terms(1 - 10 * x - 11 * y - 7 * z) == "1 −10 p_x −11 p_y −7 p_z"


def test_table_output_and_pass(capsys):
    code = main(["run", "table1-shor", "--verifications", "1", "-K", "1", "--expect", "table1.json"])
    out = capsys.readouterr().out
    assert code == 0
    assert "Shor fidelity: 1 −5 p_x −6 p_y −10 p_z  PASS" in out


def test_failing_expectation_exits_one(tmp_path, capsys):
    bad = {"experiment": "table1-shor", "rows": [{"id": "wrong", "scenario": {"verifications": 1}, "measure": "shor_state",
           "poly": [{"m": [0, 0, 0], "c": 1}, {"m": [1, 0, 0], "c": -4}, {"m": [0, 1, 0], "c": -6}, {"m": [0, 0, 1], "c": -10}]}]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["run", "table1-shor", "--verifications", "1", "-K", "1", "--expect", str(path)]) == 1
    assert "[FAIL] wrong [1, 0, 0]" in capsys.readouterr().out


def test_missing_expectation_file():
    assert main(["run", "table1-shor", "--expect", "/nonexistent/none.json"]) == 2


def test_json_is_deterministic(capsys):
    argv = ["run", "table2", "--ancilla", "single", "-K", "1", "--alpha", "0.3", "--format", "json"]
    main(argv)
    first = capsys.readouterr().out
    main(argv + ["--workers", "2"])
    assert capsys.readouterr().out == first
    (doc,) = json.loads(first)
    assert doc["experimentId"] == "table2"
    assert {r["measure"] for r in doc["results"]} == {"seven_qubit", "one_qubit"}


def test_csv(capsys):
    assert main(["run", "table1-shor", "--verifications", "0", "-K", "1", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("experiment,params,measure")
    assert len(lines) == 5


def test_nonzero_syndrome_table(capsys):
    assert main(["run", "section4b", "--engine", "both"]) == 0
    out = capsys.readouterr().out
    assert "leading order: 1" in out
    assert "CNOT q7 q11" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shorsim", "run", "table1-shor", "--verifications", "2", "-K", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "1 −5 p_x −6 p_y −13 p_z" in proc.stdout

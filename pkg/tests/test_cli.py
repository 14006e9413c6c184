import json
import subprocess
import sys
from pathlib import Path

import pytest

from vboe_sim.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


SMALL = {
    "kind": "honest_acceptance",
    "params": {"N_c": 8, "N_t": 8, "w": 0.1, "epsilon": 0.3, "k": 2},
    "trials": 4,
    "master_seed": 1,
}


def test_run_ok(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("VBOE_SEED", raising=False)
    out = tmp_path / "out"
    assert main(["run", "--config", str(write(tmp_path, SMALL)), "--out", str(out)]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    assert {p.name for p in out.iterdir()} == {"report.json", "summary.csv", "timing.json"}


def test_global_flags_before_or_after_subcommand(tmp_path, monkeypatch):
    monkeypatch.delenv("VBOE_SEED", raising=False)
    c = str(write(tmp_path, SMALL))
    assert main(["--seed", "7", "run", "--config", c, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", "--config", c, "--seed", "7", "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    assert json.loads(a)["config"]["master_seed"] == 7


def test_run_fail_exit(tmp_path, monkeypatch):
    # with w = 0 even the honest server cannot be accepted
    monkeypatch.delenv("VBOE_SEED", raising=False)
    doc = {**SMALL, "params": {**SMALL["params"], "w": 0.0}}
    assert main(["run", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == EXIT_FAIL


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--config", "/nonexistent.json"],
        ["bounds", "--N_c", "10"],
        ["bounds", "--N_c", "100", "--N_t", "100", "--k", "2", "--w", "0.2", "--epsilon", "0.3",
         "--gamma1", "0.01", "--gamma2", "0.01"],
        ["replay", "/nonexistent.jsonl"],
    ],
)
def test_error_exit(argv, capsys):
    assert main(argv) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_exit(tmp_path):
    assert main(["run", "--config", str(write(tmp_path, {**SMALL, "bogus": 1}))]) == EXIT_ERROR


def test_bounds_prints_terms(capsys):
    argv = ["bounds", "--N_c", "10000", "--N_t", "10000", "--k", "2", "--w", "0.005", "--epsilon", "0.1",
            "--gamma1", "0.05", "--gamma2", "0.02"]
    assert main(argv) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["total"] == pytest.approx(0.27091093594964505)


def test_record_then_replay(tmp_path, capsys):
    assert main(["record", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("computation.jsonl", "test.jsonl"):
        assert main(["replay", str(tmp_path / name)]) == EXIT_OK
    rows = (tmp_path / "test.jsonl").read_text().splitlines()
    traps = json.loads(rows[0])["payload"]["secrets"]["traps"]
    for i, line in enumerate(rows):
        r = json.loads(line)
        if r["type"] == "bit" and r["vertex"] == traps[0]:
            r["payload"] ^= 1
            rows[i] = json.dumps(r)
            break
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    assert main(["replay", str(bad)]) == EXIT_FAIL
    assert json.loads(capsys.readouterr().out)["mismatches"] == [{"type": "trap", "vertex": traps[0]}]


def test_replay_with_pattern_file(tmp_path):
    p = str(CONFIGS / "path3.json")
    assert main(["record", "--pattern", p, "--out", str(tmp_path)]) == EXIT_OK
    assert main(["replay", str(tmp_path / "computation.jsonl"), "--pattern", p]) == EXIT_OK


def test_audit_single_pattern(tmp_path):
    assert main(["audit", "--pattern", str(CONFIGS / "path3.json"), "--out", str(tmp_path)]) == EXIT_OK


def test_console_script_entry(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "vboe_sim.cli", "bounds", "--config", str(CONFIGS / "bounds.json"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "PASS" in res.stdout

import json
import subprocess
import sys
import time

import pytest

from uplinknl.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_pnl_smf(capsys):
    t0 = time.perf_counter()
    code, out, _ = run(capsys, "pnl", "--length", "43")
    assert time.perf_counter() - t0 < 1.0
    assert code == EXIT_OK
    assert 42.6 <= json.loads(out)["p_nl_dbm"] <= 42.8
    code, out, _ = run(capsys, "pnl", "--length", "3", "--power", "40")
    d = json.loads(out)
    assert 54.1 <= d["p_nl_dbm"] <= 54.3
    assert d["phi_bar"] == pytest.approx(10 ** ((40 - d["p_nl_dbm"]) / 10))


def test_pnl_default_hpoa(capsys):
    code, out, _ = run(capsys, "pnl")
    assert code == EXIT_OK and json.loads(out)["p_nl_dbm"] == pytest.approx(42.7, abs=1e-6)


def test_shaping_table(capsys, tmp_path):
    code, out, _ = run(capsys, "shaping-table", "--out", str(tmp_path / "t.csv"))
    lines = out.splitlines()
    assert code == EXIT_OK
    assert "max_energy=36" in lines[0]
    assert lines[1] == "address,a1,a2,a3,a4" and len(lines) == 2 + 32
    assert lines[2] == "0,1,1,1,1"
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "0,1,1,1,1"


def test_config_error_exit(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"tx": {"baud": -1}}))
    code, _, err = run(capsys, "simulate", "--config", str(p), "--power", "40")
    assert code == EXIT_CONFIG and "tx.baud" in err
    code, _, _ = run(capsys, "simulate", "--config", str(tmp_path / "missing.json"))
    assert code == EXIT_CONFIG
    code, _, _ = run(capsys, "sweep", "--axis", "kappa")
    assert code == EXIT_CONFIG


def test_infeasible_exit(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"target_gmi": 4.6, "mc": {"symbols": 1024, "bursts": 1, "n_sim": 2}}))
    code, _, err = run(capsys, "simulate", "--config", str(p), "--power", "40")
    assert code == EXIT_INFEASIBLE and "infeasible" in err


def test_numerical_failure_exit(capsys, tmp_path):
    p = tmp_path / "c.json"
    # a tiny step budget forces the split-step solver to give up
    doc = {"experiment": "psd", "config": {"channel": {"model": "ssfm", "max_phase_per_step": 1e-9}},
           "psd": {"bursts": 1, "symbols": 256, "kinds": ["mb"]}}
    p.write_text(json.dumps(doc))
    code, _, err = run(capsys, "sweep", "--experiment", str(p), "--out", str(tmp_path / "o"))
    assert code == EXIT_NUMERICAL and "numerical" in err


def test_simulate_single_power(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"mc": {"symbols": 1024, "bursts": 1, "n_sim": 2}}))
    code, out, _ = run(capsys, "simulate", "--config", str(p), "--power", "40")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["acceptable_loss_db"] > 60 and d["record"]["config_hash"]


def test_sweep_axis_writes_json(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"power_dbm": [40], "mc": {"symbols": 1024, "bursts": 1, "n_sim": 2}}))
    code, out, _ = run(capsys, "sweep", "--config", str(p), "--axis", "block_length", "--values", "2,4",
                       "--out", str(tmp_path / "o"))
    assert code == EXIT_OK
    res = json.loads((tmp_path / "o" / "sweep.json").read_text())
    assert res["axis"] == "block_length" and res["values"] == [2, 4]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "uplinknl.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()

import json
import subprocess
import sys

import numpy as np
import pytest

from matfree.cli import main
from matfree.io import read_vtk

SMALL = {"grid": {"bounds": [[-15, -15, 0], [15, 15, 10]], "divisions": [4, 4, 4]},
         "material": {"kind": "two_layer", "params": {"z_threshold": 5.0}},
         "time": {"dt": 0.01, "n_steps": 3},
         "bench": {"sizes": [[3, 3, 3], [4, 4, 4]], "strategies": ["flexible", "coalesced"],
                   "n_steps": 1}}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_simulate(cfg_path, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out), "--dump-matrix"]) == 0
    dims, *_, values = read_vtk(out / "final.vtk")
    assert dims == (5, 5, 5) and values.max() > 0
    assert (out / "iterations.csv").read_text().startswith("step,iterations")
    assert (out / "A.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["dofs"] == 125


def test_simulate_partitioned_matches(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg_path), "--out", str(a)])
    main(["simulate", "--config", str(cfg_path), "--out", str(b), "--partitions", "2",
          "--split-fraction", "0.4"])
    va, vb = read_vtk(a / "final.vtk")[3], read_vtk(b / "final.vtk")[3]
    assert np.max(np.abs(va - vb)) <= 1e-10


def test_bench(cfg_path, tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--config", str(cfg_path), "--out", str(out)]) == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
    assert (out / "phases.csv").exists()
    assert "slope" in capsys.readouterr().out


def test_invert_small(tmp_path):
    cfg = {"grid": {"bounds": [[-15, -15, 0], [15, 15, 12.7]], "divisions": [6, 6, 4]},
           "material": {"kind": "corrosion", "params": {"depth": 3.175}},
           "solver": {"strategy": "flexible"},
           "time": {"dt": 0.5, "n_steps": 4},
           "load": {"kind": "gaussian_beam", "power_watts": 10.0, "sigma": 2.0},
           "inverse": {"camera": {"pitch": 3.0}, "chain": {"n_burn": 2, "n_keep": 10}}}
    p = tmp_path / "inv.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "inv"
    assert main(["invert", "--config", str(p), "--seed", "4", "--out", str(out)]) == 0
    first = (out / "chain.csv").read_text()
    assert first.startswith("iteration,theta,loglik,accepted")
    assert json.loads((out / "summary.json").read_text())["n_keep"] == 10
    assert (out / "data.csv").exists()
    main(["invert", "--config", str(p), "--seed", "4", "--out", str(out)])
    assert (out / "chain.csv").read_text() == first


def test_contract_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "unknown": 1}))
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["invert", "--config", "laminate", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_verify_fault_injection(capsys):
    assert main(["verify", "--inject-k-sign-flip"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  oracle" in out and "[operator]" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "matfree", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout

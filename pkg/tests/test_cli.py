import json
import subprocess
import sys

import numpy as np
import pytest

from heavyband.cli import main
from heavyband.harness.selftest import CheckResult
from heavyband.models import laplacian_1d
from heavyband.resolvent import stieltjes_trace
from heavyband.spectrum import SpectralDecomposition


def test_green_trace_matches(capsys):
    assert main(["green", "--model", "laplacian", "--N", "64", "--E", "0.5", "--eta", "0.1", "--pair", "3,5"]) == 0
    out = json.loads(capsys.readouterr().out)
    m = stieltjes_trace(laplacian_1d(64), 0.5 + 0.1j)
    assert complex(*out["trace"]) == pytest.approx(m, abs=1e-14)
    assert out["trace_deviation"] < 1e-12
    assert out["entries"][0][:2] == [3, 5]
    assert out["entry_deviations"][0][2] < 1e-12


def test_green_noisy_to_file(tmp_path):
    dest = tmp_path / "g.json"
    args = ["green", "--N", "50", "--family", "pareto", "--K", "1", "--seed", "4", "--E", "0", "--eta", "0.05",
            "--output", str(dest)]
    assert main(args) == 0
    assert json.loads(dest.read_text())["trace"][1] > 0


def test_spectrum_outputs(tmp_path, capsys):
    args = ["spectrum", "--N", "40", "--family", "truncated", "--K", "1", "--vectors", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    eigs = SpectralDecomposition.read_csv(tmp_path / "eigenvalues.csv")
    assert len(eigs) == 40 and np.all(np.diff(eigs) >= 0)
    meta = json.loads((tmp_path / "spectrum.json").read_text())
    assert meta["eigenvectors"]["shape"] == [40, 40]
    V = SpectralDecomposition.read_vectors(tmp_path / "eigenvectors.f64", 40)
    assert np.allclose(V @ V.T, np.eye(40), atol=1e-8)


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["green", "--N", "10"],
    ["green", "--N", "10", "--E", "0", "--eta", "0"],
    ["green", "--N", "10", "--E", "0", "--eta", "0.1", "--pair", "1,99"],
    ["green", "--N", "10", "--E", "0", "--eta", "0.1", "--pair", "x"],
    ["green", "--N", "10", "--E", "0", "--eta", "0.1", "--alpha", "3", "--family", "pareto"],
    ["experiment"],
    ["experiment", "run", "trace_law"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_experiment_list(capsys):
    assert main(["experiment", "list"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert set(names) == {"local_law", "trace_law", "entrywise_failure", "boundedness",
                          "spectral_statistics", "concentration"}


def _config(tmp_path, **extra):
    c = {"experiment": "trace_law", "noise": {"family": "pareto", "alpha": 1.0, "K": 0},
         "N_list": [64], "trials": 3, "pilot_trials": 2, "mesh": [3, 2], "output_dir": str(tmp_path / "out")}
    c.update(extra)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(c))
    return p


def test_experiment_run_twice_identical(tmp_path):
    p = _config(tmp_path)
    assert main(["experiment", "run", "trace_law", "--config", str(p)]) == 0
    first = (tmp_path / "out" / "trace_law.trials.jsonl").read_bytes()
    assert main(["experiment", "run", "trace_law", "--config", str(p)]) == 0
    assert (tmp_path / "out" / "trace_law.trials.jsonl").read_bytes() == first
    for suffix in ("report.json", "summary.csv"):
        assert (tmp_path / "out" / f"trace_law.{suffix}").exists()


def test_experiment_run_rejects(tmp_path):
    assert main(["experiment", "run", "local_law", "--config", str(_config(tmp_path))]) == 1
    assert main(["experiment", "run", "trace_law", "--config", str(_config(tmp_path, extra_key=1))]) == 1
    assert main(["experiment", "run", "trace_law", "--config", str(tmp_path / "missing.json")]) == 1


def test_selftest_passes(capsys):
    assert main(["selftest", "--instances", "10"]) == 0
    assert all(line.startswith("PASS") for line in capsys.readouterr().out.splitlines())


def test_selftest_gate_failure_exit_2(monkeypatch):
    import heavyband.harness.selftest as st

    monkeypatch.setattr(st, "run_selftest", lambda **kw: [CheckResult("broken", False, 1.0)])
    assert main(["selftest"]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "heavyband", "experiment", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "trace_law" in r.stdout

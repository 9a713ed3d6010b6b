import json
import subprocess
import sys

import numpy as np
import pytest

from bmlab.bmf import read_field
from bmlab.cli import CONFIG_SCHEMA, main

TINY = {
    "seed": 1,
    "grid": {"n": 2, "N": 16},
    "space": {"s": 1.0, "p": 2.0, "q": 1.5, "r": 1.0},
    "scheme": {"T": 0.05, "dt": 0.005, "m_max": 2, "diagnostics": False},
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_info(capsys):
    assert main(["info"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["defaults"]["smallness_c"] > 0
    assert set(info["windows"]) == {"local", "global"}


def test_generate_norms_heat(tmp_path, capsys):
    f = tmp_path / "u.bmf"
    assert main(["generate", "--kind", "single_shell", "--j", "1", "--dim", "2", "--grid", "32",
                 "--seed", "3", "--out", str(f)]) == 0
    u = read_field(f)
    assert u.grid.N == 32 and u.components == 1
    capsys.readouterr()
    assert main(["norms", "--in", str(f), "--p", "4", "--q", "2", "--s", "0.5", "--r", "inf"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["params"]["r"] == "inf" and rec["value"] > 0
    g = tmp_path / "h.bmf"
    assert main(["heat", "--in", str(f), "--t", "0.1", "--out", str(g)]) == 0
    assert np.abs(read_field(g).values).max() < np.abs(u.values).max()


def test_verify_single_check(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "--inequality", "holder", "--grid", "32", "--out", str(out)]) == 0
    assert "holder: PASS" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["holder"]["pass"] is True
    assert (out / "holder.csv").read_text().startswith("sample,lhs,rhs")


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--config", _write(tmp_path, TINY), "--out", str(out)]) == 0
    for name in ("manifest.json", "report.json", "norms.csv", "a0.bmf", "u0.bmf",
                 "a_final.bmf", "u_final.bmf", "gradpi_final.bmf"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["m_final"] == 2


@pytest.mark.parametrize("argv", [
    ["verify", "--inequality", "nonsense"],
    ["generate", "--kind", "nonsense", "--out", "x.bmf"],
    ["norms", "--in", "missing.bmf", "--p", "4", "--q", "2", "--s", "0"],
    ["frobnicate"],
    ["norms"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and err.count("\n") == 1


def test_config_rejects_unknown_keys(tmp_path, capsys):
    bad = dict(TINY, extra=1)
    assert main(["solve", "--config", _write(tmp_path, bad)]) == 2
    assert "extra" in capsys.readouterr().err
    bad = dict(TINY, scheme=dict(TINY["scheme"], speed=2))
    assert main(["solve", "--config", _write(tmp_path, bad)]) == 2
    assert CONFIG_SCHEMA["additionalProperties"] is False


def test_config_rejects_out_of_window_exponents(tmp_path):
    bad = dict(TINY, space={"s": 3.0, "p": 2.0, "q": 1.5})
    assert main(["solve", "--config", _write(tmp_path, bad)]) == 2


def test_gate_failure_exit_3(tmp_path, capsys):
    cfg = dict(TINY, data={"a0": {"kind": "random_bandlimited", "params": {"kmax": 1.5, "amplitude": 0.9}}})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "r")]) == 3
    captured = capsys.readouterr()
    assert "smallness gate failed" in captured.err
    assert json.loads(captured.out)["gate"]["passed"] is False


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bmlab", "info"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "version" in json.loads(proc.stdout)

import json
import subprocess
import sys

import pytest

from bimeron.cli import VALID_KEYS, main, resolve_config
from bimeron.grid import constant_field, make_grid, save_field


def test_verify_prints_max_error(tmp_path, capsys):
    assert main(["verify", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("verify: 48 cases, max relative error")
    d = json.loads((tmp_path / "verify.json").read_text())
    assert d["max_rel_err"] <= 1e-6 and d["config"]["command"] == "verify"


def test_energy_on_constant_snapshot(tmp_path, capsys):
    g = make_grid("Disk", 32)
    save_field(tmp_path / "c.field", constant_field(g, 0.3))
    assert main(["energy", "--input", str(tmp_path / "c.field"), "--out-dir", str(tmp_path / "e")]) == 0
    d = json.loads((tmp_path / "e" / "energy.json").read_text())
    assert (d["exchange"], d["dmi"], d["anisotropy"], d["total"], d["degree"]) == (0, 0, 0, 0, 0)
    assert d["config"]["domain"] == "Disk" and d["config"]["n"] == 32
    assert "degree 0" in capsys.readouterr().out


def test_config_file_and_flag_override(tmp_path):
    cfgf = tmp_path / "run.yaml"
    cfgf.write_text("domain: torus\nn: 48\nlam: 0.4\neps: 0.3\n")
    cfg = resolve_config(["energy", "--config", str(cfgf), "--eps", "0.25", "--set", "seed=7"])
    assert (cfg.domain, cfg.n, cfg.lam, cfg.eps, cfg.seed) == ("Torus", 48, 0.4, 0.25, 7)


def test_unknown_key_lists_valid_keys(tmp_path, capsys):
    cfgf = tmp_path / "bad.yaml"
    cfgf.write_text("n: 32\nbogus: 1\n")
    assert main(["energy", "--config", str(cfgf)]) == 1
    err = capsys.readouterr().err
    assert "unknown config key(s) bogus" in err
    for k in VALID_KEYS:
        assert k in err
    assert main(["energy", "--set", "nope=3"]) == 1


def test_domain_params_mismatch(tmp_path, capsys):
    assert main(["sweep-eps", "--domain", "disk", "--out-dir", str(tmp_path)]) == 1
    assert "domain mismatch" in capsys.readouterr().err
    assert main(["energy", "--lambda", "1.5", "--out-dir", str(tmp_path)]) == 1


def test_threads_env_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("BIMERON_THREADS", "3")
    assert main(["ansatz", "--domain", "torus", "--n", "32", "--lambda", "0.3", "--eps", "0.2",
                 "--out-dir", str(tmp_path)]) == 0
    side = json.loads((tmp_path / "ansatz.field.json").read_text())
    assert side["threads"] == 3
    rep = json.loads((tmp_path / "ansatz.json").read_text())
    assert rep["config"]["threads"] == 3 and rep["discrete"]["degree"] == -1


def test_minimize_bracket_and_exit_code(tmp_path, capsys):
    # strongly coupled, resolved core: converges inside the bracket
    args = ["minimize", "--domain", "disk", "--n", "96", "--lambda", "0.9", "--eps", "0.5", "--a", "0.15",
            "--R-cut", "0.4", "--tol", "1e-6", "--out-dir", str(tmp_path / "ok")]
    assert main(args) == 0
    rep = json.loads((tmp_path / "ok" / "report.json").read_text())
    assert rep["audit"]["energy_bracket"] and rep["converged"]
    assert rep["config"]["lam"] == 0.9
    # lambda = 0: the bubble collapses, the bracket audit fails -> exit 2
    args = ["minimize", "--domain", "disk", "--n", "48", "--lambda", "0", "--eps", "0.5", "--a", "0.15",
            "--R-cut", "0.4", "--tol", "1e-6", "--out-dir", str(tmp_path / "bad")]
    assert main(args) == 2
    assert "sector escape" in capsys.readouterr().out


def test_identical_runs_bit_identical(tmp_path):
    for k in ("a", "b"):
        assert main(["minimize", "--domain", "torus", "--n", "24", "--lambda", "0.4", "--eps", "0.3",
                     "--max-iters", "50", "--noise", "0.01", "--seed", "5", "--out-dir", str(tmp_path / k)]) in (0, 2)
    assert (tmp_path / "a" / "minimizer.field").read_bytes() == (tmp_path / "b" / "minimizer.field").read_bytes()


def test_sweep_and_neck_commands(tmp_path):
    assert main(["sweep-conformal", "--domain", "torus", "--n", "32", "--lams", "0.5,0.4", "--eps", "0.2",
                 "--max-iters", "20", "--out-dir", str(tmp_path / "s")]) in (0, 2)
    assert (tmp_path / "s" / "sweep_conformal.csv").read_text().startswith("# schema: bimeron-sweep v1")
    assert "entries" in json.loads((tmp_path / "s" / "audit.json").read_text())
    assert main(["sweep-eps", "--domain", "torus", "--n", "32", "--lambda", "0.3", "--eps-list", "0.01",
                 "--out-dir", str(tmp_path / "e")]) == 2  # only an under-resolved row: no ratio
    assert main(["neck", "--domain", "torus", "--n", "32", "--lambda", "0.3", "--eps", "0.2",
                 "--out-dir", str(tmp_path / "n")]) == 0
    assert len(json.loads((tmp_path / "n" / "neck.json").read_text())["rows"]) == 4


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bimeron", "verify", "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "max relative error" in r.stdout
    r = subprocess.run([sys.executable, "-m", "bimeron", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 1

"""CLI surface: generate/solve round trip, sweep, plotdata, exit codes, env seed."""

import json
import subprocess
import sys

import numpy as np
import pytest

from permsbl.cli import main

CONFIG = {
    "L": 24,
    "N": 10,
    "M": 4,
    "K": 2,
    "rho": 0.0,
    "snr_db": 60.0,
    "anchor_fraction": 0.5,
    "shared_perm": True,
    "seed": 3,
}


@pytest.fixture
def instance_path(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    out = tmp_path / "instance.json"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestGenerateSolve:
    def test_round_trip_pmsbl(self, tmp_path, instance_path):
        out = tmp_path / "solved.json"
        code = main(
            ["solve", "--in", str(instance_path), "--alg", "pmsbl", "--shared-perm",
             "--out", str(out)]
        )
        assert code == 0
        result = json.loads(out.read_text())
        assert result["perm_exact"] is True
        assert result["nmse_db"] < -30
        assert len(result["perms"]) == 4
        assert np.asarray(result["x_hat"]).shape == (24, 4)

    def test_solve_somp_and_aliases(self, tmp_path, instance_path):
        for alg in ("somp", "pmsbl-shared", "pmsbl-indep"):
            out = tmp_path / f"{alg}.json"
            assert main(["solve", "--in", str(instance_path), "--alg", alg,
                         "--out", str(out)]) == 0
        assert json.loads((tmp_path / "pmsbl-shared.json").read_text())["shared_perm"]

    def test_solve_pksbl_uses_config_rho(self, tmp_path):
        cfg_obj = dict(CONFIG, rho=0.8, seed=4)
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(cfg_obj))
        inst = tmp_path / "i.json"
        main(["generate", "--config", str(cfg), "--out", str(inst)])
        out = tmp_path / "k.json"
        assert main(["solve", "--in", str(inst), "--alg", "pksbl", "--shared-perm",
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text())["perm_exact"] is True

    def test_bad_config_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(dict(CONFIG, K=99)))
        assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2

    def test_unknown_algorithm_exits_2(self, tmp_path, instance_path):
        assert main(["solve", "--in", str(instance_path), "--alg", "bogus",
                     "--out", str(tmp_path / "x.json")]) == 2

    def test_rho_one_exits_2(self, tmp_path, instance_path):
        assert main(["solve", "--in", str(instance_path), "--alg", "pksbl",
                     "--rho", "1.0", "--out", str(tmp_path / "x.json")]) == 2


class TestSweepCli:
    def spec(self, trials=2, master_seed=0):
        return {
            "base": CONFIG,
            "axis": "anchor_fraction",
            "values": [0.3, 0.6],
            "algorithms": ["pmsbl-shared", "somp"],
            "trials": trials,
            "master_seed": master_seed,
        }

    def test_sweep_and_plotdata(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(self.spec()))
        csv_path = tmp_path / "out.csv"
        assert main(["sweep", "--spec", str(spec), "--out", str(csv_path),
                     "--workers", "2"]) == 0
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "axis,algorithm,value,nmse_db,success_rate,row_accuracy,trials,failures"
        assert len(lines) == 5  # 2 values x 2 algorithms
        plots = tmp_path / "plots"
        assert main(["plotdata", "--in", str(csv_path), "--out", str(plots)]) == 0
        assert sorted(p.name for p in plots.iterdir()) == [
            "anchor_fraction_pmsbl-shared.dat",
            "anchor_fraction_somp.dat",
        ]

    def test_env_seed_overrides_master(self, tmp_path, monkeypatch):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps(self.spec(master_seed=0)))
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        main(["sweep", "--spec", str(spec), "--out", str(a)])
        monkeypatch.setenv("PERMSBL_SEED", "12345")
        main(["sweep", "--spec", str(spec), "--out", str(b)])
        monkeypatch.delenv("PERMSBL_SEED")
        spec.write_text(json.dumps(self.spec(master_seed=12345)))
        main(["sweep", "--spec", str(spec), "--out", str(c)])
        assert a.read_bytes() != b.read_bytes()
        assert b.read_bytes() == c.read_bytes()


class TestModuleEntry:
    def test_python_dash_m_invocation(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(CONFIG))
        out = tmp_path / "inst.json"
        proc = subprocess.run(
            [sys.executable, "-m", "permsbl", "generate", "--config", str(cfg),
             "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

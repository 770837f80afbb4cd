import csv
import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dilation_lab.cli import JobConfig, main, make_config
from dilation_lab.demo import GOLDEN_LN2, run_demo
from dilation_lab.formats import decode_channel, decode_matrix


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_dephasing_demo_passes(tmp_path, capsys):
    assert main(["dephasing-demo", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for label in ("Choi matrix", "eigenvalues", "Kraus", "isometry", "unitary", "recovered"):
        assert label in out
    doc = json.loads((tmp_path / "demo.json").read_text())
    assert doc["passed"] and doc["tolerance"] == 1e-10
    assert max(doc["diffs"].values()) <= 1e-10
    assert np.allclose(doc["eigenvalues"], GOLDEN_LN2["choi_eigenvalues"], atol=1e-12)


def test_dephasing_demo_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["dephasing-demo", "--seed", "12345678901234567890", "--out", str(tmp_path / name)]) == 0
    assert _digest(tmp_path / "a" / "demo.json") == _digest(tmp_path / "b" / "demo.json")


def test_demo_golden_values():
    res = run_demo()
    assert max(res["diffs"].values()) <= 1e-10
    assert abs(res["alpha"] - math.sqrt(0.75)) <= 1e-12
    assert abs(res["beta"] - 0.5) <= 1e-12
    assert abs(res["offdiag_factor"] - 0.5) <= 1e-12


@pytest.mark.parametrize("gamma,t", [(0.3, 0.2), (2.0, 1.5)])
def test_demo_other_parameters(gamma, t):
    assert max(run_demo(gamma, t)["diffs"].values()) <= 1e-10


def test_verify_transpose_map_exit_2(tmp_path):
    cfg = _write(tmp_path / "cfg.json", {"channel": {"kind": "builtin", "name": "transpose", "dim": 2}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["cp_ok"] is False
    assert math.isclose(rep["min_choi_eigenvalue"], -1.0)
    assert "tolerance" in rep


def test_verify_random_channel(tmp_path, rng):
    from dilation_lab.channels import random_kraus
    from dilation_lab.formats import encode_matrix

    ks = random_kraus(3, rng)
    cfg = _write(tmp_path / "cfg.json", {"channel": {"kind": "kraus", "operators": [encode_matrix(k) for k in ks]}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path), "--seed", "3"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["dilation"]["max_residual"] <= 1e-9
    assert rep["dilation"]["ancilla_dim"] == 9


def test_convert_roundtrip(tmp_path, capsys):
    k = [math.sqrt(0.75) * np.eye(2), 0.5 * np.diag([1.0, -1.0])]
    from dilation_lab.formats import encode_matrix

    cfg = _write(tmp_path / "cfg.json", {"channel": {"kind": "kraus", "operators": [encode_matrix(x) for x in k]}})
    assert main(["convert", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "residual" in capsys.readouterr().out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["roundtrip_residual"] <= 1e-12 and rep["kraus_count"] == 2
    chans = json.loads((tmp_path / "channel.json").read_text())
    choi = decode_matrix(chans["choi"]["matrix"])
    assert np.allclose(decode_channel(chans["kraus"]).choi.matrix, choi)


def test_evolve_csv(tmp_path):
    assert main(["evolve", "--grid", "0:1:11", "--gamma", "2", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "evolve.csv").open()))
    assert len(rows) == 11
    for r in rows:
        t = float(r["t"])
        assert math.isclose(float(r["re_01"]), 0.5 * math.exp(-2 * t), rel_tol=1e-12)
        assert float(r["re_00"]) == 0.5


def test_dilate_exact_artifacts(tmp_path):
    assert main(["dilate-exact", "--grid", "0.1:2:40", "--out", str(tmp_path)]) == 0
    for name in ("kraus_curve.json", "unitary_curve.json", "report.json"):
        assert (tmp_path / name).exists()
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["max_reduced_residual"] <= 1e-9
    assert rep["tolerance"] == 1e-9 and rep["residual_norm"]


def test_dilate_exact_tolerance_failure(tmp_path):
    assert main(["dilate-exact", "--grid", "0.1:1:5", "--tol", "1e-30", "--out", str(tmp_path)]) == 2


def test_dilate_approx_artifacts(tmp_path):
    code = main(["dilate-approx", "--epsilon", "0.1", "--grid", "0:1:21", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "approx.json").read_text())
    assert doc["ancilla_dim"] == 8 and doc["measured_sup_error"] < 0.1
    rows = list(csv.DictReader((tmp_path / "approx_eval.csv").open()))
    assert len(rows) == 21
    assert max(float(r["diamond_upper"]) for r in rows) <= doc["certified_error"]


def test_singularity_artifacts(tmp_path):
    assert main(["singularity", "--grid", "1e-6:1e-3:25:geom", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "singularity.json").read_text())
    assert -0.55 <= doc["fitted_exponent"] <= -0.45
    rows = list(csv.DictReader((tmp_path / "singularity.csv").open()))
    assert list(rows[0]) == ["t", "h_norm"] and len(rows) == doc["points"]


def test_bad_config_exit_4(tmp_path):
    assert main(["verify", "--tol", "-1", "--out", str(tmp_path)]) == 4
    bad = _write(tmp_path / "cfg.json", {"unknown_key": 1})
    assert main(["verify", "--config", bad]) == 4
    (tmp_path / "broken.json").write_text("{")
    assert main(["verify", "--config", str(tmp_path / "broken.json")]) == 4
    assert main(["dilate-exact", "--grid", "1:0:5"]) == 4
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--no-such-flag"])
    assert exc.value.code == 4


def test_io_errors_exit_3(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "missing.json")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["verify", "--out", str(blocker / "sub")]) == 3


def test_validation_errors_exit_1(tmp_path):
    cfg = _write(tmp_path / "cfg.json", {"channel": {"kind": "choi", "matrix": {"rows": 2, "cols": 2, "data": [[1, 0]]}}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 1
    cfg = _write(tmp_path / "cfg2.json", {"channel": {"kind": "kraus", "operators": [{"rows": 1, "cols": 1, "data": [[2, 0]]}]}})
    assert main(["convert", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_flags_override_config():
    cfg = make_config("evolve", {"gamma": 1.0, "grid": "0:1:3"}, {"gamma": 2.5, "grid": None})
    assert isinstance(cfg, JobConfig)
    assert cfg.gamma == 2.5 and cfg.grid == "0:1:3"
    assert cfg.tol == 1e-9


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "dilation_lab", "dephasing-demo", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "PASS" in proc.stdout

import csv
import json
import subprocess
import sys

import pytest

from higgslab.cli import main
from higgslab.config import RunConfig, parse_config, validate_config
from higgslab.errors import ConfigError
from higgslab.fieldio import read_matrix_field
from higgslab.runner import verify_manifest


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


SMALL_TORUS = {"domain": {"kind": "torus", "N": 16}, "higgs": {"preset": "diagonal"}}
SMALL_PATCH = {
    "domain": {"kind": "patch", "N": 32, "extent": 1.0},
    "higgs": {"preset": "hitchin-section", "q": {"kind": "linear", "value": 1.0}},
}


def test_defaults():
    cfg = validate_config({})
    assert cfg.domain.N == 64 and cfg.higgs.eigenvalues == [1.0, -1.0]
    assert cfg.experiment.t_list == [1.0, 2.0, 4.0, 8.0]
    assert cfg.experiment.probes == [[0.2, 0.0], [0.3, 0.0], [0.4, 0.0]]
    assert validate_config({"domain": {"n": 2, "N": 8}}).experiment.probes[0] == [0.2, 0.0, 0.0, 0.0]


@pytest.mark.parametrize(
    "data, path",
    [
        ({"domain": {"N": 4}}, "domain.N"),
        ({"domain": {"kind": "sphere"}}, "domain.kind"),
        ({"bogus": 1}, "bogus"),
        ({"higgs": {"preset": "hitchin-section", "rank": 3}}, "higgs"),
        ({"higgs": {"preset": "custom-dump"}}, "higgs"),
        ({"higgs": {"eigenvalues": [1.0]}}, "higgs"),
        ({"experiment": {"t_list": [1, 1, 2, 3]}}, "experiment.t_list"),
        ({"experiment": {"sl2": True}, "higgs": {"rank": 3}}, "higgs.rank"),
        ({"experiment": {"probes": [[0.1]]}}, "experiment.probes.0"),
        ({"higgs": {"q": {"value": [1, 2, 3]}}}, "higgs.q.value"),
    ],
)
def test_config_errors_carry_field_path(data, path):
    with pytest.raises(ConfigError) as exc:
        validate_config(data)
    assert exc.value.path.startswith(path)


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        parse_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_digest_is_canonical():
    a = validate_config({"seed": 3, "domain": {"N": 32}})
    b = validate_config({"domain": {"N": 32}, "seed": 3})
    assert a.digest() == b.digest()
    assert a.digest() != validate_config({"seed": 4, "domain": {"N": 32}}).digest()
    assert RunConfig().higgs.q.complex_value == 1.0


def test_cli_solve(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_TORUS)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    run = tmp_path / "run"
    report = json.loads((run / "report.json").read_text())
    assert report["solve"]["converged"]
    assert verify_manifest(run) == []
    _, H, _ = read_matrix_field(run / "H.fld")
    assert H.shape == (16, 16, 2, 2)
    rows = list(csv.reader(open(run / "residuals.csv")))
    assert rows[0] == ["iteration", "residual_l2", "residual_linf"]
    assert json.loads(capsys.readouterr().out)["converged"]


def test_cli_not_converged_exit_code(tmp_path):
    data = dict(SMALL_TORUS, solver={"max_iter": 1, "init_perturbation": 0.5})
    assert main(["solve", "--config", write_cfg(tmp_path, data), "--out", str(tmp_path / "r")]) == 3


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"domain": {"N": 2}})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "r")]) == 2
    assert "domain.N" in capsys.readouterr().err
    assert main(["extract-z2", "--run", str(tmp_path / "nothing"), "--out", str(tmp_path / "z")]) == 2
    assert main(["matrix-lemmas", "--samples", "0"]) == 2


def test_cli_sweep_and_extract(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_PATCH)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "sw")]) == 0
    report = json.loads((tmp_path / "sw" / "report.json").read_text())
    assert all(v for k, v in report["checks"].items() if isinstance(v, bool))
    assert len(report["fields"]) == 4 and verify_manifest(tmp_path / "sw") == []
    assert main(["extract-z2", "--run", str(tmp_path / "sw"), "--out", str(tmp_path / "z")]) == 0
    z = json.loads((tmp_path / "z" / "report.json").read_text())
    assert z["monodromy"] == -1 and z["negative_plaquettes"] == 0
    assert z["p2_defect"] <= 1e-8


def test_cli_check_identities(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"domain": {"N": 64}})
    assert main(["check-identities", "--config", cfg, "--out", str(tmp_path / "id")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["pass"] and len(out["checks"]) > 10
    # a 16^2 grid cannot resolve exp(u) spectrally: the curvature checks fail
    coarse = write_cfg(tmp_path, {"domain": {"N": 16}}, "coarse.json")
    assert main(["check-identities", "--config", coarse]) == 3


def test_cli_matrix_lemmas(tmp_path, capsys):
    assert main(["matrix-lemmas", "--samples", "2000", "--rank", "2", "--out", str(tmp_path / "m")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["results"][0]["pass"] and out["results"][0]["rank"] == 2


def test_manifest_detects_tampering(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_TORUS)
    main(["solve", "--config", cfg, "--out", str(tmp_path / "run")])
    with open(tmp_path / "run" / "H.fld", "ab") as fh:
        fh.write(b"x")
    assert verify_manifest(tmp_path / "run") == ["H.fld"]


def test_console_module_runs(tmp_path):
    cfg = write_cfg(tmp_path, {"domain": {"N": 4}})
    proc = subprocess.run([sys.executable, "-m", "higgslab.cli", "solve", "--config", cfg, "--out", str(tmp_path / "r")],
                          capture_output=True, text=True)
    assert proc.returncode == 2


def test_cli_extract_degenerate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"domain": {"N": 16}, "higgs": {"eigenvalues": [1.0, 1.0]}})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "run")]) == 0
    capsys.readouterr()
    assert main(["extract-z2", "--run", str(tmp_path / "run"), "--out", str(tmp_path / "z")]) == 0
    assert json.loads(capsys.readouterr().out)["degenerate"] is True

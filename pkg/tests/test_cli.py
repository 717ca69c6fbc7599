import json

import numpy as np

from selftrap.cli import main
from selftrap.io import emit_csv, read_csv, sha256_file

SMALL_SIM = "n_macroparticles = 100\nrecord_until_ms = 5\ntraces = 2\n"


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "selftrap" in capsys.readouterr().out


def test_trap_curve_outputs(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["trap-curve", "--out", str(out), "--delta-c-mhz", "-1,-2"]) == 0
    a = read_csv(tmp_path / "curve_dc-1.csv")
    assert list(a) == ["power_uW", "saturation", "tau_ms", "trapped"]
    assert len(a["power_uW"]) == 30
    assert np.all(np.diff(a["tau_ms"][a["trapped"]]) > 0)
    manifest = json.loads((tmp_path / "curve.manifest.json").read_text())
    assert set(manifest["outputs"]) == {"curve_dc-1.csv", "curve_dc-2.csv"}


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kapa_MHz = 2\n")
    assert main(["trap-curve", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 3
    assert "did you mean 'kappa_MHz'" in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path):
    assert main(["fit-heating", str(tmp_path / "none.csv"), "--out", str(tmp_path / "f.csv")]) == 4


def test_all_untrapped_fit_is_data_error(tmp_path, capsys):
    data = emit_csv({"power_uW": [0.1, 0.2, 0.3, 0.4], "tau_ms": [np.nan] * 4}, tmp_path / "d.csv")
    assert main(["fit-heating", str(data), "--out", str(tmp_path / "f.csv")]) == 4
    assert "error[data]" in capsys.readouterr().err


def test_collapse_then_fit(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["collapse", "--out", str(out), "--traces", "3", "--t-end-ms", "40"]) == 0
    c = read_csv(out)
    emit_csv({"t_ms": c["t_ms"], "transmission": c["transmission_norm"]}, tmp_path / "in.csv")
    fit_out = tmp_path / "fit.csv"
    assert main(["fit-collapse", str(tmp_path / "in.csv"), "--out", str(fit_out)]) == 0
    report = json.loads((tmp_path / "fit_fit.json").read_text())
    assert report["nonexponentiality"]["non_exponential"]


def test_replay_byte_identical_across_threads(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_SIM)
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--threads", "1", "--out", str(out)]) == 0
    manifest = tmp_path / "sim.manifest.json"
    assert len(json.loads(manifest.read_text())["outputs"]) == 3
    cfg.unlink()
    assert main(["replay", str(manifest), "--threads", "2"]) == 0


def test_replay_detects_changed_output(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["collapse", "--out", str(out), "--traces", "2", "--points", "21"]) == 0
    manifest = tmp_path / "c.manifest.json"
    data = json.loads(manifest.read_text())
    data["outputs"]["c.csv"] = "0" * 64
    manifest.write_text(json.dumps(data))
    assert main(["replay", str(manifest)]) == 4


def test_seed_changes_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["collapse", "--out", str(a), "--traces", "2", "--seed", "1"])
    main(["collapse", "--out", str(b), "--traces", "2", "--seed", "2"])
    assert sha256_file(a) != sha256_file(b)

import csv
import io
import os

import numpy as np
import pytest
import yaml

from meclight.cli import bundled_trace_path, main
from meclight.fid import FidParams, read_trace_csv, synthesize, write_trace_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--axis", "bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_bad_grid_exit_code(capsys):
    code, _, err = run(capsys, "sweep", "--grid", "1:0:3:lin")
    assert code == 1
    assert "min < max" in err


def test_sweep_stdout_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--axis", "field", "--pump", "off",
                       "--grid", "1e-9:1e-3:5:log")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:4] == ["axis_value", "frequency_hz", "frequency_shift_hz", "gamma2_per_s"]
    assert len(rows) == 6
    assert out.endswith("\n") and "\r" not in out


def test_sweep_files_are_deterministic_and_rerunnable(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        code, _, _ = run(capsys, "sweep", "--axis", "detuning", "--grid=-5e9:5e9:21:lin",
                         "--out", str(path), "--seed", "3")
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    manifest = tmp_path / "a.manifest.yaml"
    assert manifest.exists()
    code, _, err = run(capsys, "rerun", str(manifest), "--out", str(tmp_path / "c.csv"))
    assert code == 0 and "matches" in err
    assert (tmp_path / "c.csv").read_bytes() == a.read_bytes()


def test_rerun_detects_tampering(tmp_path, capsys):
    out = tmp_path / "s.csv"
    run(capsys, "sweep", "--grid", "1e-8:1e-6:3:log", "--out", str(out))
    manifest = tmp_path / "s.manifest.yaml"
    doc = yaml.safe_load(manifest.read_text())
    doc["output"]["sha256"] = "0" * 64
    manifest.write_text(yaml.safe_dump(doc))
    code, _, _ = run(capsys, "rerun", str(manifest), "--out", str(tmp_path / "r.csv"))
    assert code == 3


def test_config_file_option(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("exchange: {t_relax: 100}\n")
    code, out, _ = run(capsys, "config", "--config", str(cfg))
    assert code == 0
    assert "exchange.t_relax = 100.0 [user]" in out
    cfg.write_text("exchange: {t_ground: 1.0e-3, tau_metastable: 1.0e-3}\n")
    code, _, err = run(capsys, "config", "--config", str(cfg))
    assert code == 1 and "tau << T violated" in err


def test_missing_config_file(capsys):
    code, _, _ = run(capsys, "verify", "--config", "/nonexistent.yaml")
    assert code == 1


def test_discharge_command(tmp_path, capsys):
    code, out, _ = run(capsys, "discharge")
    assert code == 0
    doc = yaml.safe_load(out)
    for x in doc["intersections"]:
        assert abs(x["voltage_v"] - 0.035) < 1e-4
        assert abs(x["frequency_hz"] - 7.821) < 1e-4
    path = tmp_path / "d.csv"
    assert run(capsys, "discharge", "--out", str(path))[0] == 0
    assert path.read_text().startswith("voltage_V,")
    assert (tmp_path / "d.manifest.yaml").exists()


def test_verify_command(tmp_path, capsys):
    path = tmp_path / "v.yaml"
    code, _, err = run(capsys, "verify", "--out", str(path))
    assert code == 0
    assert yaml.safe_load(path.read_text())["passed"] is True
    assert "PASS dark_reduction" in err


def test_bundled_trace_fit(capsys):
    assert os.path.exists(bundled_trace_path())
    code, out, _ = run(capsys, "fid-fit")
    assert code == 0
    doc = yaml.safe_load(out)
    assert doc["converged"] is True
    assert abs(doc["params"]["f0"] - 7.821) < 1e-3


def test_fid_fit_freeze(tmp_path, capsys):
    path = tmp_path / "clean.csv"
    write_trace_csv(path, synthesize(FidParams(1.0, 7.821, 0.2, 30.0, 0.0, 50.0), 100, 60,
                                     0.01, 1))
    code, out, _ = run(capsys, "fid-fit", str(path), "--freeze", "S1=0", "--noise-sigma", "0.01")
    assert code == 0
    doc = yaml.safe_load(out)
    assert doc["frozen"] == ["S1", "T1"]


def test_fid_fit_malformed(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("time,value\n1,2\n")
    assert run(capsys, "fid-fit", str(path))[0] == 1


def test_fid_fit_nonconvergence_status(tmp_path, capsys):
    path = tmp_path / "noise.csv"
    rng = np.random.default_rng(0)
    t = np.arange(2000) / 100.0
    y = rng.normal(size=t.size)
    path.write_text("time_s,signal\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y)))
    assert run(capsys, "fid-fit", str(path))[0] == 2


def test_fid_synth_round_trip(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert run(capsys, "fid-synth", "--out", str(path), "--seed", "4")[0] == 0
    tr = read_trace_csv(path)
    assert tr.samples.size == 6000
    code, out, _ = run(capsys, "fid-synth", "--duration", "1", "--snr", "0")
    assert code == 0 and out.splitlines()[1] == "0.0,0.1"

import json
from pathlib import Path

import numpy as np
import pytest

import samv
from samv.cli import main
from samv.io import read_csv, read_snapshots

CONFIGS = Path(samv.__file__).parent / "configs"
THREE = str(CONFIGS / "three_sources.toml")

SMALL_SWEEP = """
[array]
sensors = 6
[[sources]]
angle_deg = 40.0
power_db = 5.0
[[sources]]
angle_deg = 70.0
power_db = 3.0
[simulation]
snapshots = 16
[sweep]
snr_db = [0.0, 20.0]
trials = 50
base_seed = 4
estimators = ["per", "samv2", "samv2-sml"]
[grid]
step_deg = 1.0
"""

SMALL_RD = """
[waveform]
code_length = 8
[grid]
delays = 6
dopplers = 6
[scene]
seed = 2
[imaging]
methods = ["mf", "samv1"]
[[targets]]
delay = 1
doppler = 1
power_db = 20.0
[[targets]]
delay = 4
doppler = 4
power_db = 20.0
"""


def run(*argv):
    return main(["--threads", "1", *argv])


@pytest.fixture
def simulated(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--config", THREE, "--out", str(out)) == 0
    return out


def test_simulate_outputs(simulated):
    Y = read_snapshots(simulated / "snapshots.csv")
    assert Y.shape == (12, 120)
    truth = json.loads((simulated / "truth.json").read_text())
    assert truth["angles_deg"] == [35.11, 50.15, 55.05]
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 1
    assert "config_text" in man and man["versions"]["numpy"] == np.__version__


def test_simulate_is_byte_identical(simulated, tmp_path):
    again = tmp_path / "again"
    assert run("simulate", "--config", THREE, "--out", str(again)) == 0
    for name in ("snapshots.csv", "truth.json"):
        assert (simulated / name).read_bytes() == (again / name).read_bytes()


def test_default_run_directory(monkeypatch, tmp_path):
    monkeypatch.setenv("SAMV_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run("simulate", "--config", THREE) == 0
    assert (tmp_path / "root" / "simulate-three_sources" / "snapshots.csv").exists()


def test_estimate_samv2_sml(simulated, tmp_path):
    out = tmp_path / "est"
    code = run("estimate", "--config", THREE, "--data", str(simulated / "snapshots.csv"), "--estimator", "samv2-sml", "--out", str(out))
    assert code == 0
    _, rows = read_csv(out / "peaks.csv", "peaks")
    angles = [float(r[0]) for _, r in rows]
    np.testing.assert_allclose(angles, [35.11, 50.15, 55.05], atol=0.1)
    _, spec = read_csv(out / "spectrum.csv", "spectrum")
    assert len(spec) == 900
    trace = json.loads((out / "trace.json").read_text())
    assert trace["estimator"] == "samv2-sml" and trace["initial_iterations"] > 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["inputs_sha256"]


def test_estimate_rerun_from_manifest_is_identical(simulated, tmp_path):
    out = tmp_path / "est"
    argv = ["estimate", "--config", THREE, "--data", str(simulated / "snapshots.csv"), "--estimator", "samv1", "--out", str(out)]
    assert run(*argv) == 0
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    recorded = json.loads((out / "manifest.json").read_text())["argv"]
    assert main(recorded) == 0
    assert first == {p.name: p.read_bytes() for p in out.glob("*.csv")}


def test_unknown_estimator_is_usage_error(simulated, tmp_path, capsys):
    code = run("estimate", "--config", THREE, "--data", str(simulated / "snapshots.csv"), "--estimator", "capon", "--out", str(tmp_path / "e"))
    assert code == 2
    assert "samv2-sml" in capsys.readouterr().err


def test_input_errors_exit_two(tmp_path):
    assert run("simulate", "--config", str(tmp_path / "missing.toml")) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run("estimate", "--config", THREE, "--data", str(empty), "--estimator", "per", "--out", str(tmp_path / "e")) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[array]\nsensors = 4\n[noise]\nsigma = 1.0\n[simulation]\nsnapshots = 0\n")
    assert run("simulate", "--config", str(bad), "--out", str(tmp_path / "s")) == 2
    assert main(["nonsense"]) == 2
    assert main(["--threads", "0", "selftest"]) == 2


def test_data_dimension_mismatch_exits_two(tmp_path):
    cfg = tmp_path / "four.toml"
    cfg.write_text(SMALL_SWEEP.replace("sensors = 6", "sensors = 4").split("[sweep]")[0] + "[noise]\nsigma = 0.1\n")
    sim = tmp_path / "sim"
    assert run("simulate", "--config", THREE, "--out", str(sim)) == 0
    assert run("estimate", "--config", str(cfg), "--data", str(sim / "snapshots.csv"), "--estimator", "per", "--out", str(tmp_path / "e")) == 2


def test_sweep_smoke_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(SMALL_SWEEP)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run("sweep", "--config", str(cfg), "--trials", "10", "--out", str(out)) == 0
        outs.append(out)
    assert "SNR" in capsys.readouterr().err
    for name in ("summary.csv", "trials.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    header, rows = read_csv(outs[0] / "summary.csv", "sweep-summary")
    assert "seconds" not in header and len(rows) == 6
    assert all(int(r[header.index("trials")]) == 10 for _, r in rows)
    assert (outs[0] / "timing.csv").exists()


def test_rdimage_smoke(tmp_path):
    cfg = tmp_path / "rd.toml"
    cfg.write_text(SMALL_RD)
    out = tmp_path / "rd"
    assert run("rdimage", "--config", str(cfg), "--out", str(out)) == 0
    scene = json.loads((out / "scene.json").read_text())
    assert set(scene["methods"]) == {"mf", "samv1"}
    assert scene["methods"]["samv1"]["detected_count"] == 2
    _, rows = read_csv(out / "image_mf.csv", "rd-image")
    assert len(rows) == 36


def test_selftest_passes(capsys):
    assert run("selftest") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)

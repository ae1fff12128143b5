import json

import numpy as np
import pytest
import yaml

from photonshaper.cli import main


def write_config(tmp_path, doc, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_summary(out_dir):
    with open(out_dir / "summary.json") as fh:
        return json.load(fh)


FAST_EMISSION = {"emission": {"duration": 60.0, "amplitude": 0.5}}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_writes_artifacts(tmp_path):
    cfg = write_config(tmp_path, FAST_EMISSION)
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "config_echo.yaml").exists()
    assert (out / "envelope.csv").exists()
    assert (out / "record.csv").exists()
    summary = read_summary(out)
    assert summary["schema_version"] == 1
    metrics = summary["metrics"]
    assert 0.0 < metrics["emitted_photons"] < 1.0
    assert 0.0 < metrics["symmetry"] <= 1.0
    assert "phase_std_rad" in metrics          # superposition default
    assert metrics["efficiency"] == pytest.approx(
        2.0 * metrics["emitted_photons"])


def test_simulate_reruns_bitwise_identical(tmp_path):
    cfg = write_config(tmp_path, FAST_EMISSION)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out_b)]) == 0
    for name in ("record.csv", "envelope.csv", "summary.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_simulate_fock_protocol(tmp_path):
    cfg = write_config(tmp_path, {"emission": {"duration": 60.0,
                                               "amplitude": 0.5,
                                               "initial": "f0"}})
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    metrics = read_summary(out)["metrics"]
    assert "phase_std_rad" not in metrics      # no mean field to speak of
    assert metrics["efficiency"] == pytest.approx(metrics["emitted_photons"])


def test_config_echo_is_loadable(tmp_path):
    cfg = write_config(tmp_path, FAST_EMISSION)
    out = tmp_path / "run"
    main(["simulate", "--config", cfg, "--out", str(out)])
    echoed = yaml.safe_load((out / "config_echo.yaml").read_text())
    assert echoed["emission"]["duration"] == pytest.approx(60.0)
    assert echoed["seed"] == 12345


# ---------------------------------------------------------------------------
# calibration commands
# ---------------------------------------------------------------------------

def test_calibrate_stark(tmp_path):
    cfg = write_config(tmp_path, {"stark": {"amplitudes": [0.2],
                                            "probe_duration": 60.0}})
    out = tmp_path / "stark"
    assert main(["calibrate-stark", "--config", cfg, "--out", str(out)]) == 0
    doc = json.loads((out / "stark_map.json").read_text())
    assert doc["amplitudes_GHz"][0] == 0.0
    shifts = read_summary(out)["metrics"]["shifts_ghz"]
    assert shifts[-1] < 0.0                    # drive pushes the line down


def test_calibrate_frequency(tmp_path):
    cfg = write_config(tmp_path, {"frequency": {"duration": 60.0,
                                                "amplitude": 0.5}})
    out = tmp_path / "freq"
    code = main(["calibrate-frequency", "--config", cfg, "--out", str(out)])
    assert code == 0
    metrics = read_summary(out)["metrics"]
    assert len(metrics["offsets_ghz"]) == 5
    assert abs(metrics["correction_ghz"]) < 3.0e-3   # near the scan span


def test_reset_command(tmp_path):
    out = tmp_path / "reset"
    assert main(["reset", "--out", str(out)]) == 0
    metrics = read_summary(out)["metrics"]
    assert metrics["p_e_history"][0] == pytest.approx(0.13)
    assert metrics["final_p_e"] <= 0.04


def test_sweep_command(tmp_path):
    cfg = write_config(tmp_path, {"sweep": {"durations": [200.0],
                                            "amplitudes": [0.7],
                                            "refine_rounds": 0}})
    out = tmp_path / "sweep"
    assert main(["sweep-symmetry", "--config", cfg, "--out", str(out)]) == 0
    metrics = read_summary(out)["metrics"]
    assert metrics["best_duration_ns"] == pytest.approx(200.0)
    assert metrics["best_symmetry"] > 0.97
    assert (out / "sweep.json").exists()


# ---------------------------------------------------------------------------
# tomography command
# ---------------------------------------------------------------------------

def test_tomography_command(tmp_path):
    cfg = write_config(tmp_path, {"tomography": {"duration": 60.0,
                                                 "amplitude": 0.5,
                                                 "n_shots": 20_000}})
    out = tmp_path / "tomo"
    assert main(["tomography", "--config", cfg, "--out", str(out)]) == 0
    for name in ("record.csv", "histogram.csv", "histogram_reference.csv",
                 "tomography.json"):
        assert (out / name).exists()
    metrics = read_summary(out)["metrics"]
    assert metrics["n_shots"] == 20_000
    assert 0.0 <= metrics["fidelity"] <= 1.0
    doc = json.loads((out / "tomography.json").read_text())
    assert "rho_re" in doc["estimate"]
    assert doc["signal_moments"]["operator"] == "A"


# ---------------------------------------------------------------------------
# scenario command and error handling
# ---------------------------------------------------------------------------

def test_scenario_fig2(tmp_path):
    out = tmp_path / "fig2"
    code = main(["scenario", "fig2-symmetric", "--out", str(out)])
    assert code == 0
    summary = read_summary(out)
    assert summary["passed"] is True
    assert all(summary["checks"].values())


def test_scenario_rejects_unknown_name():
    with pytest.raises(SystemExit):
        main(["scenario", "fig9-imaginary"])


def test_bad_config_exits_2(tmp_path):
    cfg = write_config(tmp_path, {"emission": {"durations": 1.0}})
    assert main(["simulate", "--config", cfg,
                 "--out", str(tmp_path / "x")]) == 2


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path, FAST_EMISSION)
    out = tmp_path / "seeded"
    main(["simulate", "--config", cfg, "--out", str(out), "--seed", "42"])
    assert read_summary(out)["seed"] == 42
    echoed = yaml.safe_load((out / "config_echo.yaml").read_text())
    assert echoed["seed"] == 42

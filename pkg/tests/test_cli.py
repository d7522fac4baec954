"""End-to-end CLI tests: artifacts, determinism, exit codes."""

import json

import numpy as np
import pytest

from torsionlab.cli import EXIT_CONFIG, EXIT_INSTABILITY, EXIT_NUMERICAL, EXIT_OK, main
from torsionlab.manifest import verify_manifest

FAST_SIM = (
    "run.duration = 60 s\n"
    "run.applied_force = 100 pN\n"
    "forces.components = \n"
    "detector.quantization = 0 V\n"
)


def _cfg(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSimulate:
    def test_writes_timeseries_summary_manifest(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        csv_text = (out / "timeseries.csv").read_text()
        lines = csv_text.splitlines()
        assert lines[0] == "t_s,error_mV,deltaV_V,theta_rad,F_ext_N"
        first = lines[1].split(",")
        assert len(first) == 5
        assert float(first[0]) == 0.05          # plain decimal cells
        assert "np." not in csv_text
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steady_deltaV_V"] == pytest.approx(0.0112941, rel=1e-3)
        assert verify_manifest(out / "run_manifest.json") == []

    def test_same_seed_is_byte_identical(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM + "run.thermal_noise = true\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == EXIT_OK
        assert main(["simulate", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
        assert (out1 / "timeseries.csv").read_bytes() == (out2 / "timeseries.csv").read_bytes()

    def test_seed_override_changes_noise(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM + "run.thermal_noise = true\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(cfg), "--out", str(out1), "--seed", "1"])
        main(["simulate", "--config", str(cfg), "--out", str(out2), "--seed", "2"])
        assert (out1 / "timeseries.csv").read_bytes() != (out2 / "timeseries.csv").read_bytes()

    def test_json_format(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out),
                     "--format", "json"]) == EXIT_OK
        rows = json.loads((out / "timeseries.json").read_text())
        assert rows[0].keys() == {"t_s", "error_mV", "deltaV_V", "theta_rad", "F_ext_N"}

    def test_unstable_gains_exit_code(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM + "control.kp = -0.5 V/mV\n")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_INSTABILITY

    def test_limit_cycle_counts_as_instability(self, tmp_path):
        # sign-flipped P gain with the default I/D terms and a quantized
        # detector parks the loop in a huge bounded limit cycle; the
        # pre-check must refuse it even though nothing diverges
        cfg = _cfg(tmp_path, "run.duration = 60 s\ncontrol.kp = -1 V/mV\n")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_INSTABILITY

    def test_bad_config_exit_code(self, tmp_path):
        cfg = _cfg(tmp_path, "fiber.length = -1 m\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_manifest_detects_tampering(self, tmp_path):
        cfg = _cfg(tmp_path, FAST_SIM)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert verify_manifest(out / "run_manifest.json") == []
        with open(out / "timeseries.csv", "a") as fh:
            fh.write("tampered\n")
        problems = verify_manifest(out / "run_manifest.json")
        assert problems and "timeseries.csv" in problems[0]


class TestCalibrate:
    def test_from_external_csv(self, tmp_path):
        eps0 = 8.8541878128e-12
        beta = eps0 * 1e-4 * 10.0 / 1e-3**2
        c = np.pi * 0.155 * eps0 / beta
        d0 = 10e-6
        lines = ["d_r_m,V_V,deltaV_V"]
        for d_r in (1e-6, 3e-6, 5e-6, 7e-6, 8.5e-6):
            a = c / (d0 - d_r)
            for v in np.linspace(-0.1, 0.1, 7):
                lines.append(f"{d_r},{v},{a * (v - 0.02) ** 2}")
        data = tmp_path / "sweeps.csv"
        data.write_text("\n".join(lines) + "\n")
        out = tmp_path / "out"
        assert main(["calibrate", "--input", str(data), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "calibration_report.json").read_text())
        assert report["d0_m"] == pytest.approx(d0, rel=1e-6)
        assert report["beta_N_per_V"] == pytest.approx(beta, rel=1e-6)
        assert all(abs(row["V0_V"] - 0.02) < 1e-6 for row in report["v0_profile"])
        profile = (out / "v0_profile.csv").read_text().splitlines()
        assert profile[0] == "d_m,V0_V"
        assert len(profile) == 6

    def test_simulated_sweeps_from_scenario(self, tmp_path):
        cfg = _cfg(
            tmp_path,
            "forces.components = electrostatic\n"
            "forces.v0 = 20 mV\n"
            "forces.patch_rms = 0 V\n"
            "detector.quantization = 0 V\n"
            "run.contact_offset = 10 um\n"
            "run.positions = 1 um, 3.25 um, 5.5 um, 7 um, 8 um\n"
            "run.voltages = -80 mV, -47 mV, -13 mV, 20 mV, 53 mV, 87 mV, 120 mV\n"
            "run.duration = 180 s\n",
        )
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "calibration_report.json").read_text())
        assert report["d0_m"] == pytest.approx(10e-6, rel=1e-3)
        eps0 = 8.8541878128e-12
        assert report["beta_N_per_V"] == pytest.approx(eps0 * 1e-4 * 10.0 / 1e-3**2, rel=1e-3)
        assert all(abs(row["V0_V"] - 0.02) < 1e-4 for row in report["v0_profile"])

    def test_wrong_header_schema_error(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("V_V,d_r_m,deltaV_V\n0,0,0\n")
        assert main(["calibrate", "--input", str(data),
                     "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_two_positions_numerical_error(self, tmp_path):
        eps0 = 8.8541878128e-12
        lines = ["d_r_m,V_V,deltaV_V"]
        for d_r in (1e-6, 3e-6):
            for v in np.linspace(-0.1, 0.1, 7):
                lines.append(f"{d_r},{v},{100.0 * (v - 0.02) ** 2}")
        data = tmp_path / "two.csv"
        data.write_text("\n".join(lines) + "\n")
        assert main(["calibrate", "--input", str(data),
                     "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL

    def test_scenario_without_schedule_is_config_error(self, tmp_path):
        assert main(["calibrate", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestBudget:
    def test_default_budget_reproduces_reference_numbers(self, tmp_path):
        out = tmp_path / "out"
        assert main(["budget", "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "budget.json").read_text())
        assert report["delta_theta_thermal_rad"] == pytest.approx(3.8e-8, rel=0.03)
        assert report["delta_theta_swing_rad"] == pytest.approx(1.5e-10, rel=0.05)
        assert report["force_resolution_N"] <= 3e-12
        assert report["jitter_force_floor_N"]["casimir_thermal"] == pytest.approx(
            0.038e-12, rel=0.05
        )
        assert report["jitter_force_floor_N"]["electrostatic"] == pytest.approx(
            0.025e-12, rel=0.20
        )
        assert report["d_max_thermal_m"] >= 5e-6
        assert (out / "budget.txt").read_text().strip()

    def test_cooled_plate_budget(self, tmp_path):
        cfg = _cfg(tmp_path, "forces.temperature = 200 K\n")
        out = tmp_path / "out"
        assert main(["budget", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        r200 = json.loads((out / "budget.json").read_text())
        assert r200["delta_theta_thermal_rad"] == pytest.approx(
            3.7407304352477994e-08 * (200.0 / 300.0) ** 0.5, rel=0.02
        )


class TestMichelson:
    def test_synthetic_trace_report(self, tmp_path):
        out = tmp_path / "out"
        assert main(["michelson", "--synthetic", "--visibility", "0.92",
                     "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "michelson_report.json").read_text())
        assert report["gain_nm_per_V"] == pytest.approx(100.0, rel=1e-6)
        assert report["visibility"] == pytest.approx(0.92, abs=0.01)
        assert report["fringe_displacement_m"] == pytest.approx(316.4e-9, rel=1e-12)

    def test_constant_intensity_is_numerical_error(self, tmp_path):
        data = tmp_path / "flat.csv"
        lines = ["pzt_V,intensity"] + [f"{v},500.0" for v in np.linspace(0, 10, 100)]
        data.write_text("\n".join(lines) + "\n")
        assert main(["michelson", "--input", str(data),
                     "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL

    def test_needs_input_or_synthetic(self, tmp_path):
        assert main(["michelson", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestSweep:
    CFG = (
        "run.duration = 40 s\n"
        "forces.components = \n"
        "detector.quantization = 0 V\n"
        "run.forces = 10 pN, 20 pN, 40 pN\n"
    )

    def test_force_sweep_rows_ordered_and_linear(self, tmp_path):
        cfg = _cfg(tmp_path, self.CFG)
        out = tmp_path / "out"
        assert main(["sweep", "--axis", "force", "--config", str(cfg),
                     "--out", str(out), "--workers", "2"]) == EXIT_OK
        lines = (out / "sweep_summary.csv").read_text().splitlines()
        assert lines[0] == "index,F_ext_N,steady_deltaV_V,settled_theta_rms_rad"
        rows = [line.split(",") for line in lines[1:]]
        assert [int(r[0]) for r in rows] == [0, 1, 2]
        steadys = [float(r[2]) for r in rows]
        assert steadys[1] == pytest.approx(2 * steadys[0], rel=0.01)
        assert steadys[2] == pytest.approx(4 * steadys[0], rel=0.01)

    def test_serial_matches_parallel(self, tmp_path):
        cfg = _cfg(tmp_path, self.CFG)
        out1, out2 = tmp_path / "p", tmp_path / "s"
        main(["sweep", "--axis", "force", "--config", str(cfg), "--out", str(out1),
              "--workers", "2"])
        main(["sweep", "--axis", "force", "--config", str(cfg), "--out", str(out2),
              "--workers", "1"])
        assert (out1 / "sweep_summary.csv").read_bytes() == (out2 / "sweep_summary.csv").read_bytes()

    def test_missing_axis_values_is_config_error(self, tmp_path):
        cfg = _cfg(tmp_path, "run.duration = 40 s\n")
        assert main(["sweep", "--axis", "position", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_position_sweep_readout_grows_toward_contact(self, tmp_path):
        cfg = _cfg(
            tmp_path,
            "run.duration = 120 s\n"
            "forces.components = patch, casimir_ideal, casimir_thermal\n"
            "run.contact_offset = 10 um\n"
            "run.positions = 2 um, 5 um, 8 um\n"
            "detector.quantization = 0 V\n",
        )
        out = tmp_path / "out"
        assert main(["sweep", "--axis", "position", "--config", str(cfg),
                     "--out", str(out), "--workers", "1"]) == EXIT_OK
        lines = (out / "sweep_summary.csv").read_text().splitlines()
        assert lines[0] == "index,d_r_m,steady_deltaV_V,settled_theta_rms_rad"
        steadys = [float(line.split(",")[2]) for line in lines[1:]]
        assert steadys[0] < steadys[1] < steadys[2]


class TestOutputDir:
    def test_scenario_output_dir_used_when_flag_absent(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = _cfg(tmp_path, "output.dir = budget_out\n")
        assert main(["budget", "--config", str(cfg)]) == EXIT_OK
        assert (tmp_path / "budget_out" / "budget.json").exists()

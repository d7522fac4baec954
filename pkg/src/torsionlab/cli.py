"""Command-line interface.

Subcommands: simulate | calibrate | budget | michelson | sweep.
Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 feedback instability, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import (
    calibrate_sweeps,
    michelson_calibrate,
    michelson_trace_from_csv,
    run_electrostatic_calibration,
    sweeps_from_csv,
    synthetic_michelson_trace,
)
from .control import run_null_measurement
from .errors import ConfigError, InstabilityError, NumericalError, TorsionLabError
from .instrument import GapState
from .manifest import build_manifest, utc_now, write_manifest
from .scenario import Scenario, load_scenario, scenario_hash
from .sensitivity import build_report

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INSTABILITY = 4

LOOP_CSV_HEADER = "t_s,error_mV,deltaV_V,theta_rad,F_ext_N"


def _load(args) -> Scenario:
    scenario = load_scenario(args.config) if args.config else Scenario()
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _out_dir(args, scenario: Scenario) -> Path:
    out = Path(args.out) if args.out is not None else Path(scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _finish(args, scenario, command, out, artifacts, started) -> None:
    digest = scenario_hash(scenario) if scenario is not None else ""
    seed = scenario.seed if scenario is not None else (args.seed or 0)
    manifest = build_manifest(digest, command, seed, started, artifacts, out)
    write_manifest(manifest, out)


def _loop_gap_and_forces(scenario: Scenario):
    if scenario.forces.components:
        return scenario.forces, GapState(
            scenario.run.contact_offset, scenario.run.position
        )
    return None, None


def _run_simulation(scenario: Scenario, position: float | None = None,
                    applied_force: float | None = None):
    run = scenario.run
    forces, gap = _loop_gap_and_forces(scenario)
    if gap is not None and position is not None:
        gap = GapState(run.contact_offset, position)
    return run_null_measurement(
        scenario.instrument,
        scenario.pid,
        run.duration,
        run.dt,
        forces=forces,
        gap=gap,
        applied_force=run.applied_force if applied_force is None else applied_force,
        actuator_mode=scenario.actuator_mode,
        thermal_noise=run.thermal_noise,
        pzt_jitter=run.pzt_jitter,
        temperature=scenario.forces.temperature,
        seed=scenario.seed,
        delta_theta_min=run.delta_theta_min,
    )


def write_loop_csv(result, path: Path) -> Path:
    lines = [LOOP_CSV_HEADER]
    for k in range(len(result.t)):
        lines.append(
            f"{float(result.t[k])!r},{float(result.error_mv[k])!r},"
            f"{float(result.delta_v[k])!r},{float(result.theta[k])!r},"
            f"{float(result.applied_force[k])!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_simulate(args) -> int:
    started = utc_now()
    scenario = _load(args)
    out = _out_dir(args, scenario)
    result = _run_simulation(scenario)
    artifacts = []
    if args.format == "json":
        rows = [
            {
                "t_s": float(result.t[k]),
                "error_mV": float(result.error_mv[k]),
                "deltaV_V": float(result.delta_v[k]),
                "theta_rad": float(result.theta[k]),
                "F_ext_N": float(result.applied_force[k]),
            }
            for k in range(len(result.t))
        ]
        artifacts.append(_write_json(out / "timeseries.json", rows))
    else:
        artifacts.append(write_loop_csv(result, out / "timeseries.csv"))
    summary = {
        "scenario_hash": scenario_hash(scenario),
        "seed": scenario.seed,
        "steady_deltaV_V": result.steady_delta_v,
        "settled_theta_mean_rad": result.settled_theta_mean,
        "settled_theta_rms_rad": result.settled_theta_rms,
        "samples": len(result.t),
    }
    artifacts.append(_write_json(out / "summary.json", summary))
    _finish(args, scenario, "simulate", out, artifacts, started)
    print(f"steady deltaV = {result.steady_delta_v:.6g} V over {len(result.t)} samples")
    return EXIT_OK


def _calibration_payload(result) -> dict:
    return {
        "d0_m": result.d0,
        "beta_N_per_V": result.beta,
        "prefactor_Vm_per_V2": result.prefactor,
        "sphere_radius_m": result.sphere_radius,
        "v0_profile": [{"d_m": d, "V0_V": v0} for d, v0 in result.v0_profile],
        "positions": [
            {
                "d_r_m": p.d_r,
                "failed": p.failed,
                "error": p.error,
                "curvature_per_V": None if p.failed else p.fit.curvature,
                "V0_V": None if p.failed else p.fit.v0,
                "offset_V": None if p.failed else p.fit.offset,
                "rms_residual_V": None if p.failed else p.fit.rms_residual,
            }
            for p in result.positions
        ],
    }


def cmd_calibrate(args) -> int:
    started = utc_now()
    scenario = _load(args)
    out = _out_dir(args, scenario)
    if args.input:
        sweeps = sweeps_from_csv(args.input)
        result = calibrate_sweeps(sweeps, scenario.forces.sphere.radius)
    else:
        run = scenario.run
        if not run.positions or not run.voltages:
            raise ConfigError(
                "calibration needs run.positions and run.voltages in the scenario "
                "(or --input CSV)"
            )
        result = run_electrostatic_calibration(
            scenario.instrument,
            scenario.pid,
            scenario.forces,
            run.contact_offset,
            run.positions,
            run.voltages,
            duration=run.duration,
            dt=run.dt,
            actuator_mode=scenario.actuator_mode,
            thermal_noise=run.thermal_noise,
            pzt_jitter=run.pzt_jitter,
            seed=scenario.seed,
            delta_theta_min=run.delta_theta_min,
        )
    artifacts = [_write_json(out / "calibration_report.json", _calibration_payload(result))]
    profile_lines = ["d_m,V0_V"] + [f"{d!r},{v0!r}" for d, v0 in result.v0_profile]
    profile_path = out / "v0_profile.csv"
    profile_path.write_text("\n".join(profile_lines) + "\n", encoding="utf-8")
    artifacts.append(profile_path)
    fits_lines = ["d_r_m,curvature_per_V,V0_V,offset_V,rms_residual_V,failed"]
    for p in result.positions:
        if p.failed:
            fits_lines.append(f"{p.d_r!r},,,,,True")
        else:
            fits_lines.append(
                f"{p.d_r!r},{p.fit.curvature!r},{p.fit.v0!r},{p.fit.offset!r},"
                f"{p.fit.rms_residual!r},False"
            )
    fits_path = out / "sweep_fits.csv"
    fits_path.write_text("\n".join(fits_lines) + "\n", encoding="utf-8")
    artifacts.append(fits_path)
    _finish(args, scenario, "calibrate", out, artifacts, started)
    print(
        f"d0 = {result.d0 * 1e6:.4f} um, beta = {result.beta:.6g} N/V, "
        f"{sum(p.failed for p in result.positions)} failed position(s)"
    )
    return EXIT_OK


def _budget_text(report) -> str:
    rows = [
        ("minimum detectable angle", f"{report.delta_theta_min:.3e} rad"),
        ("thermal angle noise", f"{report.delta_theta_thermal:.3e} rad"),
        ("swing angle noise", f"{report.delta_theta_swing:.3e} rad"),
        ("force resolution", f"{report.force_resolution * 1e12:.3f} pN"),
    ]
    for model, floor in report.jitter_force_floor.items():
        rows.append(
            (
                f"jitter floor [{model}] at {report.reference_distance * 1e6:g} um",
                f"{floor * 1e12:.4f} pN",
            )
        )
    if report.d_max_thermal is not None:
        rows.append(("thermal Casimir reach", f"{report.d_max_thermal * 1e6:.3f} um"))
    rows.append(
        ("thermal noise below detector floor", "yes" if report.thermal_below_detector else "no")
    )
    rows.append(("swing noise negligible", "yes" if report.swing_negligible else "no"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def cmd_budget(args) -> int:
    started = utc_now()
    scenario = _load(args)
    out = _out_dir(args, scenario)
    report = build_report(
        scenario.instrument,
        scenario.forces,
        delta_theta_min=scenario.run.delta_theta_min,
        reference_distance=scenario.reference_distance,
    )
    payload = {
        "delta_theta_min_rad": report.delta_theta_min,
        "delta_theta_thermal_rad": report.delta_theta_thermal,
        "delta_theta_swing_rad": report.delta_theta_swing,
        "force_resolution_N": report.force_resolution,
        "jitter_force_floor_N": report.jitter_force_floor,
        "d_max_thermal_m": report.d_max_thermal,
        "reference_distance_m": report.reference_distance,
        "position_jitter_m": report.position_jitter,
        "thermal_below_detector": report.thermal_below_detector,
        "swing_negligible": report.swing_negligible,
        "inputs": report.inputs,
    }
    artifacts = [_write_json(out / "budget.json", payload)]
    text = _budget_text(report)
    text_path = out / "budget.txt"
    text_path.write_text(text, encoding="utf-8")
    artifacts.append(text_path)
    _finish(args, scenario, "budget", out, artifacts, started)
    print(text, end="")
    return EXIT_OK


def cmd_michelson(args) -> int:
    started = utc_now()
    scenario = _load(args) if args.config else Scenario(
        seed=args.seed if args.seed is not None else 12345
    )
    out = _out_dir(args, scenario)
    if args.input:
        trace = michelson_trace_from_csv(args.input, wavelength=args.wavelength_nm * 1e-9)
    elif args.synthetic:
        trace = synthetic_michelson_trace(
            gain=args.gain_nm_per_v * 1e-9,
            visibility=args.visibility,
            n_fringes=args.fringes,
            n_points=args.points,
            wavelength=args.wavelength_nm * 1e-9,
            noise_rms=args.noise,
            seed=scenario.seed,
        )
    else:
        raise ConfigError("michelson needs --input CSV or --synthetic")
    fit = michelson_calibrate(trace)
    payload = {
        "gain_m_per_V": fit.gain,
        "gain_nm_per_V": fit.gain * 1e9,
        "visibility": fit.visibility,
        "phase_rad": fit.phase,
        "mean_intensity": fit.mean_intensity,
        "rms_residual": fit.rms_residual,
        "n_fringes": fit.n_fringes,
        "low_contrast": fit.low_contrast,
        "wavelength_m": trace.wavelength,
        "fringe_displacement_m": trace.wavelength / 2.0,
    }
    artifacts = [_write_json(out / "michelson_report.json", payload)]
    _finish(args, scenario, "michelson", out, artifacts, started)
    print(
        f"gain = {fit.gain * 1e9:.4f} nm/V, visibility = {fit.visibility:.3f}, "
        f"{fit.n_fringes:.1f} fringes"
    )
    return EXIT_OK


def _sweep_point(payload) -> tuple:
    flat, axis, index, value = payload
    scenario = Scenario.from_flat(flat)
    child_seed = np.random.SeedSequence([scenario.seed, index]).generate_state(1)[0]
    scenario = replace(scenario, seed=int(child_seed))
    if axis == "position":
        result = _run_simulation(scenario, position=value)
    else:
        result = _run_simulation(scenario, applied_force=value)
    return index, value, result.steady_delta_v, result.settled_theta_rms


def cmd_sweep(args) -> int:
    started = utc_now()
    scenario = _load(args)
    out = _out_dir(args, scenario)
    run = scenario.run
    values = list(run.positions if args.axis == "position" else run.forces)
    if not values:
        key = "run.positions" if args.axis == "position" else "run.forces"
        raise ConfigError(f"sweep over {args.axis} needs {key} in the scenario")
    flat = scenario.to_flat()
    payloads = [(flat, args.axis, i, v) for i, v in enumerate(values)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(payloads))) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    rows.sort(key=lambda r: r[0])  # merge by sweep index, not completion order
    unit = "d_r_m" if args.axis == "position" else "F_ext_N"
    lines = [f"index,{unit},steady_deltaV_V,settled_theta_rms_rad"]
    for index, value, steady, rms in rows:
        lines.append(f"{index},{value!r},{steady!r},{rms!r}")
    sweep_path = out / "sweep_summary.csv"
    sweep_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _finish(args, scenario, f"sweep --axis {args.axis}", out, [sweep_path], started)
    print(f"swept {len(rows)} {args.axis} value(s) -> {sweep_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torsionlab",
        description="Virtual torsion-balance laboratory for sphere-plane force "
        "measurements: simulation, calibration, and sensitivity budgets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="scenario file")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: scenario output.dir)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p_sim = sub.add_parser("simulate", help="run one closed-loop null measurement")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="electrostatic calibration pipeline")
    common(p_cal)
    p_cal.add_argument("--input", type=Path, default=None,
                       help="sweep CSV (d_r_m,V_V,deltaV_V) instead of simulating")
    p_cal.set_defaults(func=cmd_calibrate)

    p_bud = sub.add_parser("budget", help="noise and sensitivity budget")
    common(p_bud)
    p_bud.set_defaults(func=cmd_budget)

    p_mic = sub.add_parser("michelson", help="PZT gain from interferometer fringes")
    common(p_mic)
    p_mic.add_argument("--input", type=Path, default=None,
                       help="trace CSV (pzt_V,intensity)")
    p_mic.add_argument("--synthetic", action="store_true", help="generate a trace")
    p_mic.add_argument("--gain-nm-per-v", type=float, default=100.0)
    p_mic.add_argument("--fringes", type=float, default=6.0)
    p_mic.add_argument("--visibility", type=float, default=0.95)
    p_mic.add_argument("--points", type=int, default=600)
    p_mic.add_argument("--noise", type=float, default=0.0, help="intensity noise rms")
    p_mic.add_argument("--wavelength-nm", type=float, default=632.8)
    p_mic.set_defaults(func=cmd_michelson)

    p_sw = sub.add_parser("sweep", help="fan a simulation over positions or forces")
    common(p_sw)
    p_sw.add_argument("--axis", choices=("position", "force"), default="position")
    p_sw.add_argument("--workers", type=int, default=4)
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TorsionLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())

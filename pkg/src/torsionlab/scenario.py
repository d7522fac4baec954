"""Scenario configuration: unit-suffixed key/value files, defaults,
serialization, and stable hashing.

Configs are line-oriented ``dotted.key = value`` files. Dimensioned
values require a unit suffix ("76 um", "1.8e11 Pa"); bare numbers are
rejected for dimensioned keys so silent unit errors cannot slip in.
An empty file yields the default instrument.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .control import ACTUATOR_MODES, PidConfig
from .errors import ConfigError, DomainError
from .forces import COMPONENTS, ForceModelParams
from .instrument import (
    ActuatorSpec,
    BalanceSpec,
    DetectorSpec,
    FiberSpec,
    InstrumentSpec,
    SPHERE_PRESETS,
    SphereSpec,
    VoltageState,
)

__all__ = ["Scenario", "RunSchedule", "load_scenario", "parse_scenario_text", "scenario_hash"]


UNIT_TABLES: dict[str, dict[str, float]] = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "area": {"m2": 1.0, "cm2": 1e-4, "mm2": 1e-6},
    "mass": {"kg": 1.0, "g": 1e-3},
    "pressure": {"Pa": 1.0, "MPa": 1e6, "GPa": 1e9},
    "temperature": {"K": 1.0},
    "voltage": {"V": 1.0, "mV": 1e-3, "uV": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3},
    "force": {"N": 1.0, "uN": 1e-6, "nN": 1e-9, "pN": 1e-12},
    "angle": {"rad": 1.0, "mrad": 1e-3, "urad": 1e-6},
    "inertia": {"kg.m2": 1.0},
    "p-gain": {"V/mV": 1.0},
    "i-gain": {"V/(mV.s)": 1.0, "V/mV/s": 1.0},
    "d-gain": {"V.s/mV": 1.0},
    "detector-sensitivity": {"mV/urad": 1.0},
}

# key -> (kind, default). Quantity kinds name their dimension table.
_Q = "quantity:"
KEY_REGISTRY: dict[str, tuple[str, object]] = {
    "seed": ("int", 12345),
    "fiber.torsion_modulus": (_Q + "pressure", 1.8e11),
    "fiber.diameter": (_Q + "length", 76e-6),
    "fiber.length": (_Q + "length", 0.20),
    "balance.mass": (_Q + "mass", 0.0973),
    "balance.casimir_arm": (_Q + "length", 0.10),
    "balance.feedback_arm": (_Q + "length", 0.10),
    "balance.pendulum_length": (_Q + "length", 0.20),
    "balance.moment_of_inertia": (_Q + "inertia", None),
    "balance.quality_factor": ("number", 1000.0),
    "sphere.preset": ("string", None),
    "sphere.radius": (_Q + "length", 0.155),
    "sphere.material": ("string", "BK quartz, Au coated"),
    "detector.sensitivity": (_Q + "detector-sensitivity", 0.5),
    "detector.quantization": (_Q + "voltage", 0.1e-3),
    "actuator.pzt_accuracy": (_Q + "length", 0.2e-9),
    "actuator.pzt_range": (_Q + "length", 15e-6),
    "actuator.stage_resolution": (_Q + "length", 8e-9),
    "actuator.fb_plate_area": (_Q + "area", 1e-4),
    "actuator.fb_gap": (_Q + "length", 1e-3),
    "actuator.fb_bias": (_Q + "voltage", 10.0),
    "forces.components": ("string-list", list(COMPONENTS)),
    "forces.temperature": (_Q + "temperature", 300.0),
    "forces.applied_voltage": (_Q + "voltage", 0.0),
    "forces.v0": (_Q + "voltage", 0.0),
    "forces.v0_log_slope": (_Q + "voltage", 0.0),
    "forces.patch_rms": (_Q + "voltage", 5e-3),
    "forces.patch_exponent": ("number", 1.0),
    "control.kp": (_Q + "p-gain", 0.5),
    "control.ki": (_Q + "i-gain", 0.08),
    "control.kd": (_Q + "d-gain", 1.05),
    "control.output_limit": (_Q + "voltage", 10.0),
    "control.integral_limit": (_Q + "voltage", 10.0),
    "control.sample_interval": (_Q + "time", 0.05),
    "control.actuator_mode": ("string", "linear"),
    "run.dt": (_Q + "time", 0.05),
    "run.duration": (_Q + "time", 300.0),
    "run.applied_force": (_Q + "force", 0.0),
    "run.contact_offset": (_Q + "length", 10e-6),
    "run.position": (_Q + "length", 0.0),
    "run.positions": ("list:length", []),
    "run.voltages": ("list:voltage", []),
    "run.forces": ("list:force", []),
    "run.thermal_noise": ("bool", False),
    "run.pzt_jitter": ("bool", False),
    "run.delta_theta_min": (_Q + "angle", 0.1e-6),
    "budget.reference_distance": (_Q + "length", 1e-6),
    "output.dir": ("string", "out"),
}


@dataclass(frozen=True)
class RunSchedule:
    """What a run executes: timing, gap placement, drive lists, noise."""

    dt: float = 0.05
    duration: float = 300.0
    applied_force: float = 0.0
    contact_offset: float = 10e-6
    position: float = 0.0
    positions: tuple = ()
    voltages: tuple = ()
    forces: tuple = ()
    thermal_noise: bool = False
    pzt_jitter: bool = False
    delta_theta_min: float = 0.1e-6


@dataclass(frozen=True)
class Scenario:
    """Fully resolved configuration for one reproducible run."""

    instrument: InstrumentSpec = field(default_factory=InstrumentSpec)
    forces: ForceModelParams = field(default_factory=ForceModelParams)
    pid: PidConfig = field(default_factory=PidConfig)
    actuator_mode: str = "linear"
    run: RunSchedule = field(default_factory=RunSchedule)
    reference_distance: float = 1e-6
    seed: int = 12345
    output_dir: str = "out"

    def to_flat(self) -> dict:
        """Flat dotted-key dict of resolved SI values; lossless."""
        inst, f, pid, run = self.instrument, self.forces, self.pid, self.run
        return {
            "seed": self.seed,
            "fiber.torsion_modulus": inst.fiber.torsion_modulus,
            "fiber.diameter": inst.fiber.diameter,
            "fiber.length": inst.fiber.length,
            "balance.mass": inst.balance.mass,
            "balance.casimir_arm": inst.balance.casimir_arm,
            "balance.feedback_arm": inst.balance.feedback_arm,
            "balance.pendulum_length": inst.balance.pendulum_length,
            "balance.moment_of_inertia": inst.balance.moment_of_inertia,
            "balance.quality_factor": inst.balance.quality_factor,
            "sphere.radius": inst.sphere.radius,
            "sphere.material": inst.sphere.material,
            "detector.sensitivity": inst.detector.sensitivity,
            "detector.quantization": inst.detector.quantization * 1e-3,  # mV -> V
            "actuator.pzt_accuracy": inst.actuator.pzt_accuracy,
            "actuator.pzt_range": inst.actuator.pzt_range,
            "actuator.stage_resolution": inst.actuator.stage_resolution,
            "actuator.fb_plate_area": inst.actuator.fb_plate_area,
            "actuator.fb_gap": inst.actuator.fb_gap,
            "actuator.fb_bias": inst.actuator.fb_bias,
            "forces.components": sorted(f.components),
            "forces.temperature": f.temperature,
            "forces.applied_voltage": f.voltages.applied,
            "forces.v0": f.voltages.minimizing,
            "forces.v0_log_slope": f.v0_log_slope,
            "forces.patch_rms": f.voltages.patch_rms,
            "forces.patch_exponent": f.patch_exponent,
            "control.kp": pid.kp,
            "control.ki": pid.ki,
            "control.kd": pid.kd,
            "control.output_limit": pid.output_limit,
            "control.integral_limit": pid.integral_limit,
            "control.sample_interval": pid.sample_interval,
            "control.actuator_mode": self.actuator_mode,
            "run.dt": run.dt,
            "run.duration": run.duration,
            "run.applied_force": run.applied_force,
            "run.contact_offset": run.contact_offset,
            "run.position": run.position,
            "run.positions": list(run.positions),
            "run.voltages": list(run.voltages),
            "run.forces": list(run.forces),
            "run.thermal_noise": run.thermal_noise,
            "run.pzt_jitter": run.pzt_jitter,
            "run.delta_theta_min": run.delta_theta_min,
            "budget.reference_distance": self.reference_distance,
            "output.dir": self.output_dir,
        }

    @staticmethod
    def from_flat(values: dict) -> "Scenario":
        return _build_scenario(dict(values))


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical JSON form; stable under key reordering."""
    payload = json.dumps(scenario.to_flat(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _parse_quantity(raw: str, dimension: str, where: str) -> float:
    table = UNIT_TABLES[dimension]
    parts = raw.split(None, 1)
    try:
        number = float(parts[0])
    except (ValueError, IndexError):
        raise ConfigError(f"{where}: cannot parse number from {raw!r}") from None
    if len(parts) == 1:
        raise ConfigError(
            f"{where}: bare number {raw!r}; expected a {dimension} unit "
            f"({', '.join(table)})"
        )
    unit = parts[1].strip()
    if unit not in table:
        owner = next((dim for dim, t in UNIT_TABLES.items() if unit in t), None)
        if owner is not None:
            raise ConfigError(
                f"{where}: unit {unit!r} is a {owner} unit but this key expects "
                f"{dimension} ({', '.join(table)})"
            )
        raise ConfigError(
            f"{where}: unknown unit {unit!r}; expected {dimension} "
            f"({', '.join(table)})"
        )
    return number * table[unit]


def _parse_value(key: str, kind: str, raw: str, where: str):
    if kind.startswith("quantity:"):
        return _parse_quantity(raw, kind.split(":", 1)[1], where)
    if kind.startswith("list:"):
        dimension = kind.split(":", 1)[1]
        items = [s.strip() for s in raw.split(",") if s.strip()]
        return [_parse_quantity(item, dimension, where) for item in items]
    if kind == "string-list":
        return [s.strip() for s in raw.split(",") if s.strip()]
    if kind == "number":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a plain number, got {raw!r}") from None
    if kind == "int":
        try:
            return int(raw, 0)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("true", "yes", "on"):
            return True
        if low in ("false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected true/false, got {raw!r}")
    if kind == "string":
        return raw.strip()
    raise AssertionError(f"unhandled kind {kind}")


def parse_scenario_text(text: str, source: str = "<config>") -> Scenario:
    """Parse config text into a validated Scenario with defaults filled."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        if "=" not in stripped:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError(
                f"{source}:{lineno}:{col}: expected 'key = value', got {stripped.strip()!r}"
            )
        key_part, _, value_part = stripped.partition("=")
        key = key_part.strip()
        raw = value_part.strip()
        key_col = line.find(key) + 1
        where = f"{source}:{lineno}:{key_col}"
        if key not in KEY_REGISTRY:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        kind, _default = KEY_REGISTRY[key]
        value_where = f"{source}:{lineno}:{stripped.find(value_part.strip()) + 1 if raw else key_col}"
        values[key] = _parse_value(key, kind, raw, value_where)
    return _build_scenario(values, source=source)


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario_text(text, source=str(path))


def _build_scenario(values: dict, source: str = "<config>") -> Scenario:
    def get(key):
        if key in values:
            return values[key]
        return KEY_REGISTRY[key][1]

    def section(name, builder, **kwargs):
        try:
            return builder(**kwargs)
        except DomainError as exc:
            raise ConfigError(f"{source}: invalid {name}: {exc}") from None

    fiber = section(
        "fiber",
        FiberSpec,
        torsion_modulus=get("fiber.torsion_modulus"),
        diameter=get("fiber.diameter"),
        length=get("fiber.length"),
    )
    balance = section(
        "balance",
        BalanceSpec,
        mass=get("balance.mass"),
        casimir_arm=get("balance.casimir_arm"),
        feedback_arm=get("balance.feedback_arm"),
        pendulum_length=get("balance.pendulum_length"),
        moment_of_inertia=get("balance.moment_of_inertia"),
        quality_factor=get("balance.quality_factor"),
    )
    preset = get("sphere.preset")
    if preset is not None:
        if preset not in SPHERE_PRESETS:
            raise ConfigError(
                f"{source}: unknown sphere preset {preset!r}; "
                f"available: {', '.join(sorted(SPHERE_PRESETS))}"
            )
        sphere = SPHERE_PRESETS[preset]
    else:
        sphere = section(
            "sphere", SphereSpec, radius=get("sphere.radius"), material=get("sphere.material")
        )
    detector = section(
        "detector",
        DetectorSpec,
        sensitivity=get("detector.sensitivity"),
        quantization=get("detector.quantization") * 1e3,  # V -> mV, readout units
    )
    actuator = section(
        "actuator",
        ActuatorSpec,
        pzt_accuracy=get("actuator.pzt_accuracy"),
        pzt_range=get("actuator.pzt_range"),
        stage_resolution=get("actuator.stage_resolution"),
        fb_plate_area=get("actuator.fb_plate_area"),
        fb_gap=get("actuator.fb_gap"),
        fb_bias=get("actuator.fb_bias"),
    )
    components = get("forces.components")
    forces = section(
        "forces",
        ForceModelParams,
        sphere=sphere,
        voltages=VoltageState(
            applied=get("forces.applied_voltage"),
            minimizing=get("forces.v0"),
            patch_rms=get("forces.patch_rms"),
        ),
        temperature=get("forces.temperature"),
        components=frozenset(components),
        patch_exponent=get("forces.patch_exponent"),
        v0_log_slope=get("forces.v0_log_slope"),
    )
    pid = section(
        "control",
        PidConfig,
        kp=get("control.kp"),
        ki=get("control.ki"),
        kd=get("control.kd"),
        output_limit=get("control.output_limit"),
        integral_limit=get("control.integral_limit"),
        sample_interval=get("control.sample_interval"),
    )
    mode = get("control.actuator_mode")
    if mode not in ACTUATOR_MODES:
        raise ConfigError(
            f"{source}: control.actuator_mode must be one of {ACTUATOR_MODES}, got {mode!r}"
        )
    run = RunSchedule(
        dt=get("run.dt"),
        duration=get("run.duration"),
        applied_force=get("run.applied_force"),
        contact_offset=get("run.contact_offset"),
        position=get("run.position"),
        positions=tuple(get("run.positions")),
        voltages=tuple(get("run.voltages")),
        forces=tuple(get("run.forces")),
        thermal_noise=bool(get("run.thermal_noise")),
        pzt_jitter=bool(get("run.pzt_jitter")),
        delta_theta_min=get("run.delta_theta_min"),
    )
    if run.dt <= 0 or run.duration <= 0:
        raise ConfigError(f"{source}: run.dt and run.duration must be positive")
    if run.delta_theta_min <= 0:
        raise ConfigError(f"{source}: run.delta_theta_min must be positive")
    reference = get("budget.reference_distance")
    if reference <= 0:
        raise ConfigError(f"{source}: budget.reference_distance must be positive")
    seed = get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"{source}: seed must be an integer")
    instrument = InstrumentSpec(
        fiber=fiber, balance=balance, sphere=sphere, detector=detector, actuator=actuator
    )
    return Scenario(
        instrument=instrument,
        forces=forces,
        pid=pid,
        actuator_mode=mode,
        run=run,
        reference_distance=reference,
        seed=seed,
        output_dir=str(get("output.dir")),
    )

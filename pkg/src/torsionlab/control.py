"""Null-measurement feedback loop.

The detector reading is regulated to zero by a discrete PID controller
whose output voltage drives the feedback plates on the far side of the
balance; the settled correction voltage is the force readout. In linear
actuator mode the feedback force is exactly proportional to the output
voltage, so the steady readout is exactly proportional to the applied
force; quadratic mode models the physical parallel-plate actuator around
a bias voltage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .constants import CONSTANTS
from .dynamics import (
    PlantParams,
    SimState,
    TraceRow,
    detector_read,
    pzt_actual_position,
    step,
)
from .errors import DomainError, InstabilityError
from .forces import ForceModelParams, torsion_constant, total_force
from .instrument import ActuatorSpec, BalanceSpec, GapState, InstrumentSpec

__all__ = [
    "PidConfig",
    "PidState",
    "LoopRecord",
    "NullMeasurementResult",
    "pid_step",
    "feedback_torque",
    "run_null_measurement",
]

ACTUATOR_MODES = ("linear", "quadratic")

# Angle ceiling used by the divergence check, in units of delta_theta_min.
DIVERGENCE_FACTOR = 100.0


@dataclass(frozen=True)
class PidConfig:
    """Discrete PID gains mapping detector millivolts to output volts."""

    kp: float = 0.5                  # V per mV
    ki: float = 0.08                 # V per (mV s)
    kd: float = 1.05                 # V s per mV
    output_limit: float = 10.0      # |output| <= limit, V
    integral_limit: float = 10.0    # anti-windup clamp on the I term, V
    sample_interval: float = 0.05   # s

    def __post_init__(self) -> None:
        if self.sample_interval <= 0:
            raise DomainError("controller sample interval must be positive")
        if not (math.isfinite(self.output_limit) and math.isfinite(self.integral_limit)):
            raise DomainError("controller limits must be finite")
        if self.output_limit <= 0 or self.integral_limit <= 0:
            raise DomainError("controller limits must be positive")


@dataclass(frozen=True)
class PidState:
    """Controller memory between samples."""

    integral: float = 0.0            # accumulated I term, V
    prev_error: float = 0.0          # mV
    saturated: bool = False


def pid_step(
    cfg: PidConfig, state: PidState, error: float, dt: float
) -> tuple[float, PidState]:
    """One controller update; returns (output volts, new state).

    Derivative acts on the measured signal (identical to derivative on
    error for the fixed zero setpoint of a null measurement), and the
    integral term is clamped so saturation cannot wind it up.
    """
    if dt <= 0:
        raise DomainError("controller step must be positive")
    integral = state.integral + cfg.ki * error * dt
    integral = min(max(integral, -cfg.integral_limit), cfg.integral_limit)
    derivative = (error - state.prev_error) / dt
    output = cfg.kp * error + integral + cfg.kd * derivative
    saturated = abs(output) > cfg.output_limit
    if saturated:
        output = math.copysign(cfg.output_limit, output)
    return output, PidState(integral=integral, prev_error=error, saturated=saturated)


def feedback_torque(
    delta_v: float,
    spec: ActuatorSpec,
    balance: BalanceSpec,
    mode: str = "linear",
) -> float:
    """Restoring torque produced by the feedback plates for an output δV.

    Quadratic mode is the physical parallel-plate force around the bias,
    referenced so δV = 0 gives zero torque:

        tau = eps0 A [(bias + δV)^2 - bias^2] / (2 gap^2) * r_fb

    Linear mode is its small-signal slope eps0 A bias δV / gap^2 * r_fb.
    """
    if spec.fb_gap <= 0:
        raise DomainError("feedback-plate gap must be positive")
    if mode not in ACTUATOR_MODES:
        raise DomainError(f"actuator mode must be one of {ACTUATOR_MODES}")
    scale = CONSTANTS.eps0 * spec.fb_plate_area / spec.fb_gap**2
    if mode == "linear":
        force = scale * spec.fb_bias * delta_v
    else:
        force = 0.5 * scale * ((spec.fb_bias + delta_v) ** 2 - spec.fb_bias**2)
    return force * balance.feedback_arm


@dataclass(frozen=True)
class LoopRecord:
    """One sample of the closed-loop time series."""

    t: float                         # s
    error: float                     # mV
    delta_v: float                   # V
    theta: float                     # rad
    applied_force: float             # N, external force on the Casimir arm


@dataclass
class NullMeasurementResult:
    """Column-oriented loop record plus the settled readout."""

    t: np.ndarray
    error_mv: np.ndarray
    delta_v: np.ndarray
    theta: np.ndarray
    applied_force: np.ndarray
    steady_delta_v: float
    settled_theta_mean: float
    settled_theta_rms: float

    def iter_records(self) -> Iterator[LoopRecord]:
        for k in range(len(self.t)):
            yield LoopRecord(
                t=float(self.t[k]),
                error=float(self.error_mv[k]),
                delta_v=float(self.delta_v[k]),
                theta=float(self.theta[k]),
                applied_force=float(self.applied_force[k]),
            )


def _stability_precheck(
    instrument: InstrumentSpec,
    pid: PidConfig,
    plant: PlantParams,
    dt: float,
    actuator_mode: str,
) -> None:
    """Short noiseless step-response run; raises if the loop diverges.

    A 100 pN step is applied for six natural periods. The angle envelope
    over the last two periods must fall below the envelope over the first
    two, and must end up below the open-loop static deflection tau/alpha:
    a bounded limit cycle (e.g. sign-flipped gains pinned by detector
    quantization and output saturation) is just as unusable as outright
    divergence.
    """
    quiet = replace(plant, thermal_noise=False)
    n = int(round(6.0 * plant.period / dt))
    per = max(1, int(round(2.0 * plant.period / dt)))
    state = SimState.seeded(0)
    pid_state = PidState()
    tau_ext = 100e-12 * instrument.balance.casimir_arm
    open_loop = tau_ext / plant.stiffness
    peak_early = 0.0
    peak_late = 0.0
    for k in range(n):
        reading = detector_read(state.theta, instrument.detector)
        delta_v, pid_state = pid_step(pid, pid_state, reading, dt)
        tau = tau_ext - feedback_torque(
            delta_v, instrument.actuator, instrument.balance, actuator_mode
        )
        step(state, quiet, tau, dt)
        a = abs(state.theta)
        if not math.isfinite(a) or a > 1.0:
            raise InstabilityError(
                f"loop diverged during stability pre-check with gains "
                f"kp={pid.kp}, ki={pid.ki}, kd={pid.kd}"
            )
        if k < per:
            peak_early = max(peak_early, a)
        elif k >= n - per:
            peak_late = max(peak_late, a)
    if (peak_late >= peak_early or peak_late > open_loop) and peak_late > 0.0:
        raise InstabilityError(
            f"loop does not regulate the test step (|theta| envelope "
            f"{peak_early:.3g} -> {peak_late:.3g} rad vs open-loop {open_loop:.3g}) "
            f"with gains kp={pid.kp}, ki={pid.ki}, kd={pid.kd}"
        )


def run_null_measurement(
    instrument: InstrumentSpec,
    pid: PidConfig,
    duration: float,
    dt: float,
    *,
    stiffness: float | None = None,
    forces: ForceModelParams | None = None,
    gap: GapState | None = None,
    applied_force: float = 0.0,
    actuator_mode: str = "linear",
    thermal_noise: bool = False,
    pzt_jitter: bool = False,
    temperature: float = 300.0,
    seed: int = 0,
    check_stability: bool = True,
    delta_theta_min: float = 1e-7,
    on_row=None,
) -> NullMeasurementResult:
    """Run the closed loop for ``duration`` seconds and return the record.

    The external force on the Casimir arm is ``applied_force`` plus, when
    a force model and gap are given, the model total at the realized gap.
    The steady readout is the mean output voltage over the final third of
    the run. Divergence beyond 100x ``delta_theta_min`` after the first
    third of the run raises InstabilityError.
    """
    if duration <= 0 or dt <= 0:
        raise DomainError("duration and dt must be positive")
    if actuator_mode not in ACTUATOR_MODES:
        raise DomainError(f"actuator mode must be one of {ACTUATOR_MODES}")
    if forces is not None and gap is None:
        raise DomainError("a gap state is required when a force model is enabled")

    alpha = stiffness if stiffness is not None else torsion_constant(instrument.fiber)
    plant = PlantParams(
        balance=instrument.balance,
        stiffness=alpha,
        temperature=temperature,
        thermal_noise=thermal_noise,
    )
    if check_stability:
        _stability_precheck(instrument, pid, plant, dt, actuator_mode)

    n = int(round(duration / dt))
    if n < 10:
        raise DomainError("duration must cover at least 10 steps")
    k_ctrl = max(1, int(round(pid.sample_interval / dt)))
    dt_ctrl = k_ctrl * dt

    state = SimState.seeded(seed, pzt_command=gap.relative_position if gap else 0.0)
    pid_state = PidState()
    delta_v = 0.0
    r_arm = instrument.balance.casimir_arm
    settle_end = n // 3
    diverge_limit = DIVERGENCE_FACTOR * delta_theta_min

    t_col = np.empty(n)
    err_col = np.empty(n)
    dv_col = np.empty(n)
    th_col = np.empty(n)
    f_col = np.empty(n)

    for k in range(n):
        if gap is not None and pzt_jitter:
            d_r = pzt_actual_position(
                state.pzt_command, instrument.actuator, state.rng
            ).position
        elif gap is not None:
            d_r = state.pzt_command
        else:
            d_r = 0.0
        state.pzt_actual = d_r

        breakdown = None
        f_ext = applied_force
        if forces is not None:
            breakdown = total_force(
                forces, GapState(gap.contact_offset, d_r)
            )
            f_ext += breakdown.total

        reading = detector_read(state.theta, instrument.detector)
        if k % k_ctrl == 0:
            delta_v, pid_state = pid_step(pid, pid_state, reading, dt_ctrl)
        tau = f_ext * r_arm - feedback_torque(
            delta_v, instrument.actuator, instrument.balance, actuator_mode
        )
        step(state, plant, tau, dt)

        t_col[k] = state.t
        err_col[k] = reading
        dv_col[k] = delta_v
        th_col[k] = state.theta
        f_col[k] = f_ext

        if on_row is not None:
            on_row(
                TraceRow(
                    t=state.t,
                    theta=state.theta,
                    omega=state.omega,
                    d_r=d_r,
                    reading_mv=reading,
                    forces=dict(breakdown.components) if breakdown else {},
                )
            )
        a = abs(state.theta)
        if not math.isfinite(a) or a > 1.0 or (k > settle_end and a > diverge_limit):
            raise InstabilityError(
                f"loop diverged at t = {state.t:.3g} s (|theta| = {a:.3g} rad) with "
                f"gains kp={pid.kp}, ki={pid.ki}, kd={pid.kd}"
            )

    tail = slice(n - n // 3, n)
    return NullMeasurementResult(
        t=t_col,
        error_mv=err_col,
        delta_v=dv_col,
        theta=th_col,
        applied_force=f_col,
        steady_delta_v=float(np.mean(dv_col[tail])),
        settled_theta_mean=float(np.mean(th_col[tail])),
        settled_theta_rms=float(np.sqrt(np.mean(th_col[tail] ** 2))),
    )

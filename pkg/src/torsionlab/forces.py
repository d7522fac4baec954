"""Sphere-plane force models.

Conventions: attractive forces are positive, the gap coordinate d
decreases as the plates approach, and everything is SI. All functions
are pure; identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .constants import CONSTANTS
from .errors import DomainError, NumericalError, PfaValidityWarning
from .instrument import GapState, SphereSpec, VoltageState

__all__ = [
    "COMPONENTS",
    "ForceModelParams",
    "ForceBreakdown",
    "torsion_constant",
    "electrostatic_force_pfa",
    "electrostatic_force_exact",
    "casimir_force_ideal",
    "casimir_force_thermal",
    "patch_force",
    "total_force",
]

# Reference scale making patch-law coefficients comparable across exponents.
PATCH_REFERENCE_DISTANCE = 1e-6  # m

COMPONENTS = ("electrostatic", "casimir_ideal", "casimir_thermal", "patch")

_EXACT_SERIES_TOL = 1e-15
_EXACT_SERIES_MAX_TERMS = 10**6


def torsion_constant(fiber) -> float:
    """Angular spring constant of a cylindrical torsion fiber, N m/rad.

    alpha = pi * Z * D^4 / (32 * L) for shear modulus Z, diameter D,
    length L.
    """
    if fiber.torsion_modulus <= 0 or fiber.diameter <= 0 or fiber.length <= 0:
        raise DomainError("fiber parameters must be positive")
    return math.pi * fiber.torsion_modulus * fiber.diameter**4 / (32.0 * fiber.length)


def _check_gap(d: float) -> None:
    if d <= 0 or not math.isfinite(d):
        raise DomainError(f"gap distance d = {d!r} must be positive and finite")


def electrostatic_force_pfa(R: float, V: float, V0: float, d: float) -> float:
    """Sphere-plane electrostatic force in the close-approach limit.

    F = pi * R * eps0 * (V - V0)^2 / d, valid for d << R.
    """
    _check_gap(d)
    if R <= 0:
        raise DomainError("sphere radius must be positive")
    dv = V - V0
    return math.pi * R * CONSTANTS.eps0 * dv * dv / d


def electrostatic_force_exact(R: float, V: float, V0: float, d: float) -> float:
    """Exact grounded sphere-plane electrostatic force via the bispherical
    capacitance series.

    C(d) = 4 pi eps0 R sinh(u) sum_n 1/sinh(n u) with cosh(u) = 1 + d/R;
    the force is the termwise derivative 0.5 (V-V0)^2 |dC/dd|:

        F = 2 pi eps0 (V-V0)^2 sum_n [n coth(n u) - coth(u)] / sinh(n u)

    The sum is truncated once a term contributes less than 1e-15 of the
    running total (the n = 1 term vanishes identically, hence the
    minimum term count before testing).
    """
    _check_gap(d)
    if R <= 0:
        raise DomainError("sphere radius must be positive")
    dv = V - V0
    if dv == 0.0:
        return 0.0
    u = math.acosh(1.0 + d / R)
    coth_u = math.cosh(u) / math.sinh(u)
    total = 0.0
    n = 1
    while n <= _EXACT_SERIES_MAX_TERMS:
        snu = math.sinh(n * u)
        term = (n * math.cosh(n * u) / snu - coth_u) / snu
        total += term
        if n > 8 and term < _EXACT_SERIES_TOL * total:
            break
        n += 1
    else:
        raise NumericalError(
            f"bispherical series did not converge within {_EXACT_SERIES_MAX_TERMS} "
            f"terms at d/R = {d / R:.3g}"
        )
    return 2.0 * math.pi * CONSTANTS.eps0 * dv * dv * total


def casimir_force_ideal(R: float, d: float) -> float:
    """Zero-temperature ideal-conductor sphere-plane Casimir force (PFA).

    F = pi^3 hbar c R / (360 d^3). A warning is emitted for d/R > 0.1
    where the proximity-force picture degrades.
    """
    _check_gap(d)
    if R <= 0:
        raise DomainError("sphere radius must be positive")
    if d / R > 0.1:
        warnings.warn(
            f"d/R = {d / R:.3g} > 0.1: proximity-force approximation unreliable",
            PfaValidityWarning,
            stacklevel=2,
        )
    return math.pi**3 * CONSTANTS.hbar * CONSTANTS.c * R / (360.0 * d**3)


def casimir_force_thermal(R: float, d: float, T: float) -> float:
    """High-temperature-limit thermal Casimir force, sphere-plane.

    F = zeta(3) k_b T R / (8 d^2).
    """
    _check_gap(d)
    if R <= 0:
        raise DomainError("sphere radius must be positive")
    if T <= 0:
        raise DomainError("temperature must be positive")
    return CONSTANTS.zeta3 * CONSTANTS.k_b * T * R / (8.0 * d * d)


def patch_force(R: float, d: float, V_patch: float, n: float = 1.0) -> float:
    """Residual surface-patch force with a configurable power law.

    F = pi * R * eps0 * V_patch^2 * d_ref^(n-1) / d^n with d_ref = 1 um.
    n = 1 reproduces the electrostatic form with an rms residual voltage.
    """
    _check_gap(d)
    if R <= 0:
        raise DomainError("sphere radius must be positive")
    if not 1.0 <= n <= 4.0:
        raise DomainError(f"patch exponent n = {n!r} must lie in [1, 4]")
    if V_patch < 0:
        raise DomainError("patch rms voltage cannot be negative")
    return (
        math.pi
        * R
        * CONSTANTS.eps0
        * V_patch**2
        * PATCH_REFERENCE_DISTANCE ** (n - 1.0)
        / d**n
    )


@dataclass(frozen=True)
class ForceModelParams:
    """Which force components act between the plates, and with what."""

    sphere: SphereSpec = field(default_factory=SphereSpec)
    voltages: VoltageState = field(default_factory=VoltageState)
    temperature: float = 300.0       # K
    components: frozenset = frozenset(COMPONENTS)
    patch_exponent: float = 1.0
    v0_log_slope: float = 0.0        # V per decade of d / 1 um (CPD drift)

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise DomainError("temperature must be positive")
        if not 1.0 <= self.patch_exponent <= 4.0:
            raise DomainError("patch exponent must lie in [1, 4]")
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise DomainError(f"unknown force components: {sorted(unknown)}")
        object.__setattr__(self, "components", frozenset(self.components))

    def minimizing_voltage_at(self, d: float) -> float:
        """Distance-dependent minimizing potential V0(d)."""
        v0 = self.voltages.minimizing
        if self.v0_log_slope != 0.0:
            v0 += self.v0_log_slope * math.log10(d / PATCH_REFERENCE_DISTANCE)
        return v0


@dataclass(frozen=True)
class ForceBreakdown:
    """Per-component forces (N) plus their sum."""

    components: dict
    total: float

    def __getitem__(self, name: str) -> float:
        return self.components[name]


def total_force(params: ForceModelParams, gap: GapState) -> ForceBreakdown:
    """Evaluate every enabled component at the current gap and sum them."""
    d = gap.require_open()
    R = params.sphere.radius
    parts: dict[str, float] = {}
    if "electrostatic" in params.components:
        parts["electrostatic"] = electrostatic_force_pfa(
            R, params.voltages.applied, params.minimizing_voltage_at(d), d
        )
    if "casimir_ideal" in params.components:
        parts["casimir_ideal"] = casimir_force_ideal(R, d)
    if "casimir_thermal" in params.components:
        parts["casimir_thermal"] = casimir_force_thermal(R, d, params.temperature)
    if "patch" in params.components:
        parts["patch"] = patch_force(
            R, d, params.voltages.patch_rms, params.patch_exponent
        )
    return ForceBreakdown(components=parts, total=math.fsum(parts.values()))

"""Fixed physical constants (CODATA 2018 / SI exact values).

These are deliberately not user-settable: every force model and noise
budget in the package evaluates against this single set.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class PhysicalConstants:
    k_b: float = 1.380649e-23        # Boltzmann constant, J/K (exact)
    eps0: float = 8.8541878128e-12   # vacuum permittivity, F/m
    hbar: float = 1.054571817e-34    # reduced Planck constant, J s
    c: float = 299792458.0           # speed of light, m/s (exact)
    g: float = 9.80665               # standard gravitational acceleration, m/s^2
    zeta3: float = 1.2020569031595943  # Apery's constant, dimensionless

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0.0:
                raise ValueError(f"constant {f.name} must be positive")


CONSTANTS = PhysicalConstants()

_DESCRIPTIONS = {
    "k_b": ("Boltzmann constant", "J/K"),
    "eps0": ("vacuum permittivity", "F/m"),
    "hbar": ("reduced Planck constant", "J s"),
    "c": ("speed of light in vacuum", "m/s"),
    "g": ("standard gravitational acceleration", "m/s^2"),
    "zeta3": ("Apery's constant zeta(3)", ""),
}


def constants_table() -> list[dict[str, str]]:
    """Reference table of the fixed constants, for reports and docs."""
    rows = []
    for f in fields(PhysicalConstants):
        name, unit = _DESCRIPTIONS[f.name]
        rows.append(
            {
                "symbol": f.name,
                "value": repr(getattr(CONSTANTS, f.name)),
                "unit": unit,
                "description": name,
            }
        )
    return rows

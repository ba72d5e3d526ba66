"""Helium thermophysical properties used by every balance equation.

Ideal-gas density plus a constant cp. At 20 bar and 50-80 K the ideal-gas
density agrees with the real fluid to ~0.1%, which is well inside every
tolerance used downstream. The interface takes (pressure, temperature) so a
real-gas table could be substituted without touching callers.
"""

from dataclasses import dataclass

from .errors import DomainError

R_UNIVERSAL = 8.314462618  # J/(mol·K), CODATA
MOLAR_MASS_HE = 4.0026e-3  # kg/mol
R_SPECIFIC_HE = R_UNIVERSAL / MOLAR_MASS_HE  # J/(kg·K)
CP_HE = 5517.0  # J/(kg·K), constant-cp model


def density(pressure: float, temperature: float) -> float:
    """Helium density [kg/m^3] from the ideal-gas law."""
    if pressure <= 0.0 or temperature <= 0.0:
        raise DomainError(
            f"density requires positive inputs, got P={pressure}, T={temperature}"
        )
    return pressure / (R_SPECIFIC_HE * temperature)


def specific_heat(temperature: float, pressure: float = 20e5) -> float:
    """cp of helium [J/(kg·K)]; constant in this model."""
    if pressure <= 0.0 or temperature <= 0.0:
        raise DomainError(
            f"specific_heat requires positive inputs, got T={temperature}, P={pressure}"
        )
    return CP_HE


@dataclass(frozen=True)
class GasState:
    """Helium state at one network location."""

    pressure: float  # Pa
    temperature: float  # K

    def __post_init__(self):
        if self.pressure <= 0.0 or self.temperature <= 0.0:
            raise DomainError(
                f"GasState requires positive P and T, got "
                f"P={self.pressure}, T={self.temperature}"
            )

    @property
    def density(self) -> float:
        return density(self.pressure, self.temperature)

    @property
    def cp(self) -> float:
        return specific_heat(self.temperature, self.pressure)


def mass_flow_from_volume_flow(volume_flow: float, state: GasState) -> float:
    """kg/s carried by a volume flow [m^3/s] at the given state."""
    if volume_flow < 0.0:
        raise DomainError(f"volume_flow must be >= 0, got {volume_flow}")
    return volume_flow * state.density

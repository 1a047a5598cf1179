"""Physical constants and the trap unit system.

Everything downstream works in trap units, hbar = m = omega0 = 1. In these
units the 1D level spacing is 1, the single-atom 3D ground-state energy is
3/2, the ground-state widths are dq0 = dp0 = 1/sqrt(2) and temperatures are
measured in hbar*omega0/k_B. SI quantities only appear at the boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# CODATA 2018 (hbar, k_B and u are exact or given to the published digits).
HBAR = 1.054571817e-34  # J s
KB = 1.380649e-23  # J / K
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
SODIUM_MASS_U = 22.98976928

# trap-unit scales
DQ0 = 1.0 / math.sqrt(2.0)
DP0 = 1.0 / math.sqrt(2.0)
E0 = 1.5


@dataclass(frozen=True)
class PhysicalConfig:
    """Isotropic harmonic trap holding atoms of a single species.

    Parameters
    ----------
    omega0 : float
        Angular trap frequency in rad/s.
    mass : float
        Atomic mass in kg.
    hbar, k_B : float
        Reduced Planck and Boltzmann constants; override only for tests.
    """

    omega0: float
    mass: float
    hbar: float = HBAR
    k_B: float = KB

    def __post_init__(self):
        for name in ("omega0", "mass", "hbar", "k_B"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")

    @classmethod
    def from_frequency(cls, frequency_hz: float, mass_u: float = SODIUM_MASS_U) -> "PhysicalConfig":
        """Build from the ordinary trap frequency nu (Hz) and a mass in atomic units."""
        return cls(omega0=2.0 * math.pi * frequency_hz, mass=mass_u * ATOMIC_MASS_UNIT)

    @classmethod
    def trap_units(cls) -> "PhysicalConfig":
        return cls(omega0=1.0, mass=1.0, hbar=1.0, k_B=1.0)

    @property
    def frequency_hz(self) -> float:
        return self.omega0 / (2.0 * math.pi)

    @property
    def energy_quantum(self) -> float:
        """hbar * omega0 in J."""
        return self.hbar * self.omega0

    @property
    def dq0(self) -> float:
        """Ground-state position width sqrt(hbar / (2 m omega0)) in m."""
        return math.sqrt(self.hbar / (2.0 * self.mass * self.omega0))

    @property
    def dp0(self) -> float:
        """Ground-state momentum width sqrt(hbar m omega0 / 2) in kg m/s."""
        return math.sqrt(self.hbar * self.mass * self.omega0 / 2.0)

    @property
    def E0(self) -> float:
        """Single-atom 3D ground-state energy (3/2) hbar omega0 in J."""
        return 1.5 * self.hbar * self.omega0


def temperature_to_trap_units(T_kelvin: float, cfg: PhysicalConfig) -> float:
    """Return k_B T / (hbar omega0)."""
    if not T_kelvin >= 0:
        raise DomainError(f"temperature must be non-negative, got {T_kelvin!r}")
    return cfg.k_B * T_kelvin / cfg.energy_quantum


def temperature_from_trap_units(T_trap: float, cfg: PhysicalConfig) -> float:
    """Inverse of :func:`temperature_to_trap_units`, returns kelvin."""
    if not T_trap >= 0:
        raise DomainError(f"temperature must be non-negative, got {T_trap!r}")
    return T_trap * cfg.energy_quantum / cfg.k_B


def microkelvin_to_trap_units(T_microK: float, cfg: PhysicalConfig) -> float:
    return temperature_to_trap_units(T_microK * 1e-6, cfg)


def trap_units_to_microkelvin(T_trap: float, cfg: PhysicalConfig) -> float:
    return temperature_from_trap_units(T_trap, cfg) * 1e6


def energy_to_joule(E_trap: float, cfg: PhysicalConfig) -> float:
    return E_trap * cfg.energy_quantum


def ground_state_length(cfg: PhysicalConfig) -> float:
    """Ground-state position uncertainty dq0 in metres."""
    return cfg.dq0


def ground_state_momentum(cfg: PhysicalConfig) -> float:
    """Ground-state momentum uncertainty dp0 in kg m/s."""
    return cfg.dp0

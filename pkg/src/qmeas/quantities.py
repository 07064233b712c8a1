"""Physical constants, energy units, and kinematic helpers.

All internal computation happens in SI units.  Public interfaces quote
energies in eV (and femtoseconds / micrometres where conventional),
because that is how the reference calculations state their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Exact by the 2019 SI redefinition of the ampere.
EV_TO_JOULE = 1.602176634e-19


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 constants, frozen in one table for bit-reproducible output.

    ``alpha`` is stored explicitly but must stay consistent with
    e^2 / (4 pi eps0 hbar c); the constructor enforces the identity to
    1e-9 relative.  Use :meth:`with_alpha` to build rescaled variants that
    keep the identity intact (the charge is rescaled with it).
    """

    c: float = 299792458.0              # speed of light, m/s
    hbar: float = 1.054571817e-34       # reduced Planck constant, J s
    e_charge: float = 1.602176634e-19   # elementary charge, C
    m_e: float = 9.1093837015e-31       # electron rest mass, kg
    m_p: float = 1.67262192369e-27      # proton rest mass, kg
    eps0: float = 8.8541878128e-12      # vacuum permittivity, F/m
    alpha: float = 7.2973525693e-3      # fine-structure constant

    def __post_init__(self) -> None:
        values = (self.c, self.hbar, self.e_charge, self.m_e, self.m_p,
                  self.eps0, self.alpha)
        if any(v <= 0 or not math.isfinite(v) for v in values):
            raise ValueError("physical constants must be positive and finite")
        derived = self.e_charge**2 / (4.0 * math.pi * self.eps0 * self.hbar * self.c)
        if abs(derived - self.alpha) > 1e-9 * self.alpha:
            raise ValueError(
                f"alpha={self.alpha!r} inconsistent with e^2/(4 pi eps0 hbar c)"
                f"={derived!r}"
            )

    @property
    def m_t(self) -> float:
        """Total mass of the electron-proton pair (kg)."""
        return self.m_e + self.m_p

    @property
    def mu(self) -> float:
        """Electron-proton reduced mass (kg)."""
        return self.m_e * self.m_p / (self.m_e + self.m_p)

    @property
    def m_e_c2_joule(self) -> float:
        return self.m_e * self.c**2

    def with_alpha(self, alpha: float) -> "PhysicalConstants":
        """Variant with a rescaled coupling; the charge follows so the
        alpha identity keeps holding and every mass stays fixed."""
        scale = math.sqrt(alpha / self.alpha)
        return replace(self, alpha=alpha, e_charge=self.e_charge * scale)

    def with_proton_mass(self, m_p: float) -> "PhysicalConstants":
        return replace(self, m_p=m_p)


CODATA2018 = PhysicalConstants()

_UNIT_ALIASES = {
    "ev": "eV",
    "electronvolt": "eV",
    "j": "J",
    "joule": "J",
}


def _canonical_unit(unit: str) -> str:
    try:
        return _UNIT_ALIASES[unit.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unsupported energy unit {unit!r}; use 'eV' or 'J'") from None


@dataclass(frozen=True)
class Energy:
    """A scalar energy tagged with its unit ('eV' or 'J')."""

    value: float
    unit: str = "eV"

    def __post_init__(self) -> None:
        object.__setattr__(self, "unit", _canonical_unit(self.unit))

    @property
    def ev(self) -> float:
        return self.value if self.unit == "eV" else self.value / EV_TO_JOULE

    @property
    def joules(self) -> float:
        return self.value if self.unit == "J" else self.value * EV_TO_JOULE


def convert_energy(e: Energy, target_unit: str) -> Energy:
    """Convert between eV and J; identity when the unit already matches."""
    target = _canonical_unit(target_unit)
    if target == e.unit:
        return e
    if target == "J":
        return Energy(e.value * EV_TO_JOULE, "J")
    return Energy(e.value / EV_TO_JOULE, "eV")


def reduced_mass(m1: float, m2: float) -> float:
    """Reduced mass m1*m2/(m1+m2); symmetric in its arguments."""
    if m1 <= 0 or m2 <= 0:
        raise ValueError("masses must be positive")
    return m1 * m2 / (m1 + m2)


def _speed_from_kinetic_ev(ke_ev, constants: PhysicalConstants = CODATA2018):
    """Relativistic speed for kinetic energy in eV; ndarray-friendly."""
    gamma = 1.0 + np.asarray(ke_ev, dtype=float) * EV_TO_JOULE / constants.m_e_c2_joule
    return constants.c * np.sqrt(1.0 - 1.0 / gamma**2)


def electron_speed(ke: Energy, constants: PhysicalConstants = CODATA2018) -> float:
    """Relativistic electron speed (m/s) for kinetic energy ``ke`` >= 0.

    v = c sqrt(1 - 1/gamma^2) with gamma = 1 + KE/(m_e c^2); strictly
    increasing in the kinetic energy and always below c.
    """
    ke_ev = ke.ev
    if ke_ev < 0:
        raise ValueError("kinetic energy must be non-negative")
    return float(_speed_from_kinetic_ev(ke_ev, constants))

"""Transition-rate formulas for localized photon packets in a crystal.

Covers the golden-rule and dipole benchmark rates, the lattice-sum integral
of the packet potential over a finite spherical sub-system, the bound-state
emission rates obtained from it, the electron-hole pair density of states,
the stimulated valence-to-conduction absorption rate, and the radius
multiplier b_k that maximizes the emission rate.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .numerics import IntegralResult, QuadratureSpec, RootProblem, find_root, \
    integrate_1d, integrate_radial_3d
from .photon import vacuum_potential_amplitude
from .quantities import CODATA2018, EV_TO_JOULE, Energy, PhysicalConstants


def gamma_factor(b_k: float) -> float:
    """Finite-domain correction gamma = ((b+1)^2 + 1)/2 * exp(-b).

    Equals 1 at b -> 0 and decreases monotonically past b ~ 1; the
    closed-form lattice integral carries a factor (1 - gamma).
    """
    if b_k <= 0:
        raise ValueError("b_k must be positive")
    return 0.5 * ((b_k + 1.0) ** 2 + 1.0) * math.exp(-b_k)


@dataclass(frozen=True)
class SubsystemGeometry:
    """Spherical sub-system of radius 2 b_k c tau (shrunk by sqrt(eps_r)
    inside a dielectric)."""

    b_k: float
    tau: float | None = None
    eps_r: float = 1.0

    def __post_init__(self) -> None:
        if self.b_k <= 0:
            raise ValueError("b_k must be positive")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive when given")
        if self.eps_r < 1.0:
            raise ValueError("eps_r must be at least 1")

    def _require_tau(self) -> float:
        if self.tau is None:
            raise ValueError("this geometry operation needs a lifetime tau")
        return self.tau

    def radius(self, constants: PhysicalConstants = CODATA2018) -> float:
        """Free-space radius 2 b_k c tau (m)."""
        return 2.0 * self.b_k * constants.c * self._require_tau()

    def radius_in_medium(self, constants: PhysicalConstants = CODATA2018) -> float:
        return self.radius(constants) / math.sqrt(self.eps_r)

    def volume(self, constants: PhysicalConstants = CODATA2018) -> float:
        r = self.radius(constants)
        return 4.0 * math.pi / 3.0 * r**3

    @property
    def gamma(self) -> float:
        return gamma_factor(self.b_k)


@dataclass(frozen=True)
class MaterialParams:
    """Semiconductor constants needed by the band-to-band rate formulas."""

    band_gap_ev: float
    eps_r: float
    m_e_eff: float        # kg
    m_h: float            # kg
    m_eh: float           # kg
    e_p_ev: float
    lattice_const: float  # m
    affinity_ev: float
    work_function_ev: float

    def __post_init__(self) -> None:
        values = (self.band_gap_ev, self.eps_r, self.m_e_eff, self.m_h,
                  self.m_eh, self.e_p_ev, self.lattice_const,
                  self.affinity_ev, self.work_function_ev)
        if any(v <= 0 for v in values):
            raise ValueError("material parameters must be positive")
        if self.m_eh > min(self.m_e_eff, self.m_h) * (1.0 + 1e-12):
            raise ValueError("pair reduced mass cannot exceed either band mass")

    @property
    def cell_volume(self) -> float:
        return self.lattice_const**3

    @classmethod
    def from_dict(cls, data: dict,
                  constants: PhysicalConstants = CODATA2018) -> "MaterialParams":
        """Build from a registry entry; masses are given in electron masses."""
        m_e = constants.m_e
        return cls(
            band_gap_ev=float(data["band_gap_ev"]),
            eps_r=float(data["eps_r"]),
            m_e_eff=float(data["m_e_eff"]) * m_e,
            m_h=float(data["m_h"]) * m_e,
            m_eh=float(data["m_eh"]) * m_e,
            e_p_ev=float(data["e_p_ev"]),
            lattice_const=float(data["lattice_const_m"]),
            affinity_ev=float(data["affinity_ev"]),
            work_function_ev=float(data["work_function_ev"]),
        )


MATERIALS_ENV_VAR = "QMEAS_MATERIALS"


def load_material(name: str, path: str | None = None,
                  constants: PhysicalConstants = CODATA2018) -> MaterialParams:
    """Load a material from the JSON registry.

    Resolution order: explicit ``path`` argument, the QMEAS_MATERIALS
    environment variable, then the registry shipped with the package.
    """
    if path is None:
        path = os.environ.get(MATERIALS_ENV_VAR)
    if path is None:
        text = resources.files("qmeas.data").joinpath("materials.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    registry = json.loads(text)
    key = name.lower()
    if key not in registry:
        raise KeyError(f"material {name!r} not in registry "
                       f"(available: {sorted(registry)})")
    return MaterialParams.from_dict(registry[key], constants)


@dataclass(frozen=True)
class TransitionInputs:
    """Everything a bound-state transition-rate formula may consume."""

    omega_if: float                  # rad/s
    geometry: SubsystemGeometry
    material: MaterialParams
    tau: float | None = None         # s; same as geometry.tau when both given
    k_prime: float = 0.0             # |k_ib - k_fb + k_if|, 1/m
    n_k: float = 5.0
    n_ph: int = 1

    def __post_init__(self) -> None:
        if self.omega_if <= 0:
            raise ValueError("omega_if must be positive")
        if self.k_prime < 0:
            raise ValueError("k_prime must be non-negative")
        if self.n_k < 1:
            raise ValueError("n_k must be at least 1")
        if not (isinstance(self.n_ph, (int, np.integer)) and self.n_ph >= 1):
            raise ValueError("n_ph must be an integer >= 1")
        if (self.tau is not None and self.geometry.tau is not None
                and abs(self.tau - self.geometry.tau) > 1e-12 * self.geometry.tau):
            raise ValueError("inputs.tau disagrees with geometry.tau")

    def _require_tau(self) -> float:
        tau = self.tau if self.tau is not None else self.geometry.tau
        if tau is None:
            raise ValueError("this rate formula needs a lifetime tau")
        return tau


# ---------------------------------------------------------------------------
# Benchmark rates
# ---------------------------------------------------------------------------

def golden_rule_rate(matrix_element_sq: float, rho: float,
                     constants: PhysicalConstants = CODATA2018) -> float:
    """Golden-rule transition rate (2 pi / hbar) |M|^2 rho."""
    if matrix_element_sq < 0 or rho < 0:
        raise ValueError("matrix element and state density must be non-negative")
    return 2.0 * math.pi / constants.hbar * matrix_element_sq * rho


def dipole_spontaneous_rate(omega: float, d_sq: float,
                            constants: PhysicalConstants = CODATA2018) -> float:
    """Spontaneous-emission rate 4 alpha omega^3 <d^2> / (3 c^2)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    if d_sq < 0:
        raise ValueError("mean squared dipole length must be non-negative")
    return 4.0 * constants.alpha * omega**3 * d_sq / (3.0 * constants.c**2)


# ---------------------------------------------------------------------------
# Lattice-sum integral and bound-state rates
# ---------------------------------------------------------------------------

def _momentum_factor(e_p_ev: float, constants: PhysicalConstants) -> float:
    """E_p / (6 m_e) expressed as E_p/(6 m_e c^2) * c^2 for unit discipline."""
    return e_p_ev * EV_TO_JOULE / (6.0 * constants.m_e * constants.c**2) * constants.c**2


def _check_gamma_margin(b_k: float) -> float:
    one_minus = 1.0 - gamma_factor(b_k)
    if one_minus <= 0.0:
        raise ValueError(
            f"b_k={b_k} is outside the validity range: the finite-domain "
            "correction exceeds 1")
    return one_minus


def lattice_sum_integral(inputs: TransitionInputs,
                         constants: PhysicalConstants = CODATA2018,
                         rel_tol: float = 1e-8) -> tuple[float, float]:
    """Magnitude of the packet potential summed over the sub-system cells.

    Returns ``(closed_form, numeric)``.  The closed form is
    8 pi (C/V_cell) (1/(2 c tau)) / (k'^2 + 1/(2 c tau)^2)^2 * (1 - gamma);
    the numeric value integrates exp(i k'.r - |r|/(2 c tau)) over the sphere
    of radius 2 b_k c tau (azimuthal reduction gives a spherical-Bessel
    factor, done here with an adaptive radial quadrature).
    """
    tau = inputs._require_tau()
    c = constants.c
    eps = 1.0 / (2.0 * c * tau)
    amp = vacuum_potential_amplitude(inputs.omega_if, inputs.n_k, constants)
    v_cell = inputs.material.cell_volume
    one_minus_gamma = _check_gamma_margin(inputs.geometry.b_k)
    kp = inputs.k_prime
    closed = (8.0 * math.pi * amp / v_cell * eps
              / (kp**2 + eps**2) ** 2 * one_minus_gamma)

    radius = 2.0 * inputs.geometry.b_k * c * tau

    def radial(r: np.ndarray) -> np.ndarray:
        damp = np.exp(-r / (2.0 * c * tau))
        if kp == 0.0:
            kernel = np.ones_like(r)
        else:
            kernel = np.sin(kp * r) / (kp * r)
        return 4.0 * math.pi * r * r * damp * kernel

    breaks = [radius * f for f in (0.25, 0.5, 0.75)]
    result = integrate_1d(radial, 0.0, radius, rel_tol=rel_tol,
                          breakpoints=breaks)
    numeric = abs(float(np.real(result.value))) * amp / v_cell
    return abs(closed), numeric


def kappa_if(inputs: TransitionInputs,
             constants: PhysicalConstants = CODATA2018) -> float:
    """Emission rate into one final bound state at momentum mismatch k'."""
    tau = inputs._require_tau()
    c = constants.c
    b_k = inputs.geometry.b_k
    one_minus_gamma = _check_gamma_margin(b_k)
    eps = 1.0 / (2.0 * c * tau)
    two_ct = 2.0 * c * tau
    return (4.0 * constants.alpha * inputs.omega_if / c**2
            * _momentum_factor(inputs.material.e_p_ev, constants)
            * 48.0 * inputs.n_k**3 / (two_ct**8 * b_k**6)
            * one_minus_gamma**2 / (inputs.k_prime**2 + eps**2) ** 4)


def kappa_bound_total(inputs: TransitionInputs,
                      constants: PhysicalConstants = CODATA2018) -> float:
    """Total emission rate from one bound state into every final state,
    (4 alpha omega / c^2)(E_p / 6 m_e)(n_k^3 / b_k^3)(1 - gamma)^2."""
    b_k = inputs.geometry.b_k
    one_minus_gamma = _check_gamma_margin(b_k)
    return (4.0 * constants.alpha * inputs.omega_if / constants.c**2
            * _momentum_factor(inputs.material.e_p_ev, constants)
            * inputs.n_k**3 / b_k**3 * one_minus_gamma**2)


def kappa_bound_total_numeric(inputs: TransitionInputs,
                              constants: PhysicalConstants = CODATA2018,
                              rel_tol: float = 1e-9,
                              tail_check_rel: float = 1e-4) -> float:
    """Quadrature oracle for :func:`kappa_bound_total`: integrates the
    per-state rate against the final-state density (2 pi^2)^-1 k'^2 V_s.

    Integrates to 20 half widths and verifies the analytic tail beyond
    that is negligible at ``tail_check_rel``.
    """
    tau = inputs._require_tau()
    c = constants.c
    eps = 1.0 / (2.0 * c * tau)
    v_s = inputs.geometry.volume(constants)
    b_k = inputs.geometry.b_k
    one_minus_gamma = _check_gamma_margin(b_k)
    two_ct = 2.0 * c * tau
    prefactor = (4.0 * constants.alpha * inputs.omega_if / c**2
                 * _momentum_factor(inputs.material.e_p_ev, constants)
                 * 48.0 * inputs.n_k**3 / (two_ct**8 * b_k**6)
                 * one_minus_gamma**2)

    def density_weighted(kp: np.ndarray) -> np.ndarray:
        return kp**2 / (2.0 * math.pi**2) * v_s * prefactor / (kp**2 + eps**2) ** 4

    upper = 20.0 * eps
    result = integrate_1d(density_weighted, 0.0, upper, rel_tol=rel_tol,
                          breakpoints=[0.2 * eps, eps, 3.0 * eps, 8.0 * eps])
    value = float(np.real(result.value))
    # Tail bound: integrand < prefactor k'^-6 V_s / (2 pi^2) past the cut.
    tail = v_s / (2.0 * math.pi**2) * prefactor / (5.0 * upper**5)
    if tail > tail_check_rel * value:
        raise ArithmeticError(
            f"momentum-mismatch tail {tail:.3e} not negligible against {value:.3e}")
    return value


def kappa_down(inputs: TransitionInputs, apply_sqrt_epsr: bool = False,
               constants: PhysicalConstants = CODATA2018) -> float:
    """Collective emission rate of n_ph coherent photons.

    Scales the single-photon bound-state total by n_ph^2; the optional
    sqrt(eps_r) factor follows the printed in-medium coupling but is off by
    default because the reference numbers are only reproduced without it.
    """
    rate = inputs.n_ph**2 * kappa_bound_total(inputs, constants)
    if apply_sqrt_epsr:
        rate *= math.sqrt(inputs.material.eps_r)
    return rate


# ---------------------------------------------------------------------------
# Band-to-band absorption
# ---------------------------------------------------------------------------

def band_transition_photon_energy(k_mag: float, material: MaterialParams,
                                  constants: PhysicalConstants = CODATA2018) -> Energy:
    """Photon energy E_g + hbar^2 k^2 / (2 m_eh) for a direct transition at
    lattice momentum magnitude ``k_mag``."""
    if k_mag < 0:
        raise ValueError("k_mag must be non-negative")
    kinetic = constants.hbar**2 * k_mag**2 / (2.0 * material.m_eh)
    return Energy(material.band_gap_ev + kinetic / EV_TO_JOULE, "eV")


def pair_state_density(photon_energy: Energy, material: MaterialParams,
                       constants: PhysicalConstants = CODATA2018) -> float:
    """Electron-hole pair density of states per joule per cubic metre,
    (1/2 pi^2) (2 m_eh / hbar^2)^(3/2) sqrt(E - E_g)."""
    excess = (photon_energy.ev - material.band_gap_ev) * EV_TO_JOULE
    if excess < 0:
        raise ValueError(
            f"photon energy {photon_energy.ev} eV below the band gap "
            f"{material.band_gap_ev} eV: no pair states")
    return (1.0 / (2.0 * math.pi**2)
            * (2.0 * material.m_eh / constants.hbar**2) ** 1.5
            * math.sqrt(excess))


def kappa_up(inputs: TransitionInputs,
             constants: PhysicalConstants = CODATA2018) -> float:
    """Valence-to-conduction absorption rate of one packet photon."""
    hbar_omega_ev = constants.hbar * inputs.omega_if / EV_TO_JOULE
    excess_ev = hbar_omega_ev - inputs.material.band_gap_ev
    if excess_ev <= 0:
        raise ValueError(
            f"photon energy {hbar_omega_ev:.4f} eV does not exceed the band "
            f"gap {inputs.material.band_gap_ev} eV")
    b_k = inputs.geometry.b_k
    one_minus_gamma = _check_gamma_margin(b_k)
    m_eh_c2_ev = inputs.material.m_eh * constants.c**2 / EV_TO_JOULE
    dos_factor = ((2.0 * m_eh_c2_ev) ** 1.5
                  / (2.0 * hbar_omega_ev**2) * math.sqrt(excess_ev))
    return (4.0 * constants.alpha * inputs.omega_if
            / (inputs.material.eps_r * constants.c**2)
            * _momentum_factor(inputs.material.e_p_ev, constants)
            * dos_factor * inputs.n_k**3 / b_k**3 * one_minus_gamma**2)


def optimal_bk(tol: float = 1e-12) -> float:
    """Radius multiplier maximizing the bound-state rate factor (1-gamma)^2/b^3.

    The stationarity condition reads 2 b^3 e^-b = 6 - 3((b+1)^2 + 1) e^-b,
    which has a single root near 2.32 inside (0.5, 10).
    """
    def residual(b: float) -> float:
        eb = math.exp(-b)
        return 2.0 * b**3 * eb - 6.0 + 3.0 * ((b + 1.0) ** 2 + 1.0) * eb

    return find_root(RootProblem(residual, 0.5, 10.0, tol=tol))

"""Hydrogen energy levels and fine-structure adjustments.

Two models are implemented side by side: the classic infinite-proton-mass
correction

    E_n alpha^2 / n * (1/(j + 1/2) - 3/(4n)),

and a finite-proton-mass variant built on reduced-mass level energies that
adds a mass-asymmetry term and a center-of-mass coupling proportional to
3 m_p E_cm / (m_t^2 c^2).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .quantities import CODATA2018, Energy, PhysicalConstants

L_LETTERS = "SPDF"

_LEVEL_RE = re.compile(r"^(\d+)([SPDF])(\d+)/(\d+)$")


@dataclass(frozen=True)
class HydrogenLevel:
    """Quantum numbers (n, l, j) of a hydrogen level.

    j is 1/2 for S states and l +/- 1/2 otherwise; half-integers are exact
    in binary so equality checks are safe.
    """

    n: int
    l: int
    j: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("principal quantum number must be >= 1")
        if not 0 <= self.l <= self.n - 1:
            raise ValueError(f"l={self.l} outside [0, {self.n - 1}] for n={self.n}")
        allowed = {0.5} if self.l == 0 else {self.l - 0.5, self.l + 0.5}
        if self.j not in allowed:
            raise ValueError(f"j={self.j} invalid for l={self.l}")

    @classmethod
    def parse(cls, token: str) -> "HydrogenLevel":
        """Parse spectroscopic notation like ``2P1/2``."""
        m = _LEVEL_RE.match(token.strip())
        if not m:
            raise ValueError(
                f"cannot parse level {token!r}; expected nLj/2 with "
                f"L in {{{','.join(L_LETTERS)}}}, e.g. 2P1/2")
        n, letter, num, den = m.groups()
        if int(den) != 2:
            raise ValueError(f"j must be a half-integer fraction over 2, got {token!r}")
        return cls(n=int(n), l=L_LETTERS.index(letter), j=int(num) / int(den))

    def __str__(self) -> str:
        return f"{self.n}{L_LETTERS[self.l]}{int(2 * self.j)}/2"


@dataclass(frozen=True)
class FineStructureModel:
    """Which correction formula to use, plus the center-of-mass kinetic
    energy (only the finite-mass model reads it)."""

    tag: str
    e_cm: Energy = Energy(0.0, "eV")

    def __post_init__(self) -> None:
        if self.tag not in ("dirac", "new"):
            raise ValueError(f"unknown model tag {self.tag!r}")
        if self.e_cm.ev < 0:
            raise ValueError("center-of-mass energy must be non-negative")


def level_energy(n: int, reduced: bool = False,
                 constants: PhysicalConstants = CODATA2018) -> Energy:
    """Bound-level energy -m c^2 alpha^2 / (2 n^2) in eV.

    ``reduced`` selects the reduced mass instead of the bare electron mass;
    strictly increasing in n.
    """
    if n < 1:
        raise ValueError("principal quantum number must be >= 1")
    mass = constants.mu if reduced else constants.m_e
    e_joule = -mass * constants.c**2 * constants.alpha**2 / (2.0 * n * n)
    return Energy(Energy(e_joule, "J").ev, "eV")


def cm_coupling_ratio(e_cm: Energy,
                      constants: PhysicalConstants = CODATA2018) -> float:
    """Dimensionless coupling 3 m_p E_cm / (m_t^2 c^2) of the center-of-mass
    motion to the bound-level energies."""
    if e_cm.ev < 0:
        raise ValueError("center-of-mass energy must be non-negative")
    return 3.0 * constants.m_p * e_cm.joules / (constants.m_t**2 * constants.c**2)


def fine_structure_adjustment(level: HydrogenLevel, model: FineStructureModel,
                              constants: PhysicalConstants = CODATA2018) -> Energy:
    """Fine-structure energy adjustment of a level under the chosen model.

    The classic model evaluates E_n alpha^2/n (1/(j+1/2) - 3/(4n)) with the
    electron-mass level energy.  The finite-mass model uses reduced-mass
    level energies and adds the mass-asymmetry term
    -E alpha^2/n (1/j - 3/(4n)) (1 - m_p^3/m_t^3) plus the center-of-mass
    coupling; the 1/j factor is evaluated as written for every j.
    """
    n, j = level.n, level.j
    alpha2 = constants.alpha**2
    if model.tag == "dirac":
        e_n = level_energy(n, reduced=False, constants=constants).ev
        return Energy(e_n * alpha2 / n * (1.0 / (j + 0.5) - 3.0 / (4.0 * n)), "eV")
    e_mu = level_energy(n, reduced=True, constants=constants).ev
    mass_ratio = 1.0 - (constants.m_p / constants.m_t) ** 3
    base = e_mu * alpha2 / n * (1.0 / (j + 0.5) - 3.0 / (4.0 * n))
    asymmetry = -e_mu * alpha2 / n * (1.0 / j - 3.0 / (4.0 * n)) * mass_ratio
    cm = cm_coupling_ratio(model.e_cm, constants) * e_mu
    return Energy(base + asymmetry + cm, "eV")


@dataclass(frozen=True)
class TransitionReport:
    """Fine-structure adjustments of a transition under both models."""

    level_upper: HydrogenLevel
    level_lower: HydrogenLevel
    adjustment_dirac: Energy
    adjustment_new: Energy
    difference: Energy
    cm_contribution: Energy

    def to_dict(self) -> dict:
        return {
            "level_upper": str(self.level_upper),
            "level_lower": str(self.level_lower),
            "adjustment_dirac_ev": self.adjustment_dirac.ev,
            "adjustment_new_ev": self.adjustment_new.ev,
            "difference_ev": self.difference.ev,
            "cm_contribution_ev": self.cm_contribution.ev,
        }


def transition_adjustment(upper: HydrogenLevel, lower: HydrogenLevel,
                          e_cm: Energy,
                          constants: PhysicalConstants = CODATA2018) -> TransitionReport:
    """Fine-structure adjustment of the upper-to-lower transition energy
    under both models, with the center-of-mass contribution isolated.

    The sign convention makes the center-of-mass row positive for
    transitions downward in binding (e.g. 2P -> 1S)."""
    dirac = FineStructureModel("dirac")
    new = FineStructureModel("new", e_cm)
    adj_dirac = Energy(
        fine_structure_adjustment(upper, dirac, constants).ev
        - fine_structure_adjustment(lower, dirac, constants).ev, "eV")
    adj_new = Energy(
        fine_structure_adjustment(upper, new, constants).ev
        - fine_structure_adjustment(lower, new, constants).ev, "eV")
    ratio = cm_coupling_ratio(e_cm, constants)
    e_mu_upper = level_energy(upper.n, reduced=True, constants=constants).ev
    e_mu_lower = level_energy(lower.n, reduced=True, constants=constants).ev
    cm = Energy(ratio * (e_mu_upper - e_mu_lower), "eV")
    return TransitionReport(
        level_upper=upper, level_lower=lower,
        adjustment_dirac=adj_dirac, adjustment_new=adj_new,
        difference=Energy(adj_new.ev - adj_dirac.ev, "eV"),
        cm_contribution=cm)

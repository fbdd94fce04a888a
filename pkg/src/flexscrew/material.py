"""Orthotropic elastic constants for the printed 316L screw.

Moduli are in GPa throughout this module. The beam solver converts to
N/mm^2 (MPa) itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class BendingPolicy(str, Enum):
    USE_E_Z = "use_e_z"
    USE_E_XY = "use_e_xy"
    GEOMETRIC_MEAN = "geometric_mean"


@dataclass(frozen=True)
class MaterialModel:
    """Elastic constants consumed by the beam surrogate.

    Parameters
    ----------
    e_xy : float
        In-plane (build plate) Young's modulus, GPa.
    e_z : float
        Build-direction Young's modulus, GPa. Must not exceed ``e_xy``.
    nu : float
        Poisson ratio, used for both couplings.
    g : float
        Shear modulus, GPa.
    bending_policy : BendingPolicy
        Which modulus the beam uses for EA and EI.
    """

    e_xy: float
    e_z: float
    nu: float = 0.3
    g: float = 59.0
    bending_policy: BendingPolicy = BendingPolicy.USE_E_Z

    def __post_init__(self):
        object.__setattr__(self, "bending_policy", BendingPolicy(self.bending_policy))
        if not (self.e_xy > 0 and self.e_z > 0 and self.g > 0):
            raise ValueError(f"moduli must be positive: {self}")
        if not 0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (0, 0.5), got {self.nu}")
        if self.e_z > self.e_xy:
            raise ValueError(f"e_z ({self.e_z}) must not exceed e_xy ({self.e_xy})")

    @property
    def label(self) -> str:
        return f"{self.e_xy:g}/{self.e_z:g}"

    @property
    def slug(self) -> str:
        return f"{self.e_xy:g}_{self.e_z:g}"

    def with_policy(self, policy) -> "MaterialModel":
        return MaterialModel(self.e_xy, self.e_z, self.nu, self.g, BendingPolicy(policy))


def huber_shear_modulus(e_a: float, e_b: float, nu_ab: float, nu_ba: float) -> float:
    """Huber's estimate of the in-plane shear modulus of an orthotropic solid.

    ``G = sqrt(e_a * e_b) / (2 * (1 + sqrt(nu_ab * nu_ba)))``
    """
    if e_a <= 0 or e_b <= 0:
        raise ValueError(f"moduli must be positive, got {e_a}, {e_b}")
    if nu_ab <= 0 or nu_ba <= 0 or nu_ab * nu_ba >= 1:
        raise ValueError(f"invalid Poisson pair ({nu_ab}, {nu_ba})")
    return math.sqrt(e_a * e_b) / (2.0 * (1.0 + math.sqrt(nu_ab * nu_ba)))


# XY/Z pairs of the standard stiffness sweep; Z sits 5 GPa below XY.
SWEEP_MODULI = ((155.0, 150.0), (165.0, 160.0), (175.0, 170.0), (185.0, 180.0))
SWEEP_NU = 0.3
SWEEP_G = 59.0


def sensitivity_set(policy=BendingPolicy.USE_E_Z) -> list[MaterialModel]:
    """The four-point Young's modulus sweep with nu and G held fixed."""
    return [MaterialModel(exy, ez, SWEEP_NU, SWEEP_G, policy) for exy, ez in SWEEP_MODULI]


def bending_modulus(m: MaterialModel) -> float:
    """Scalar modulus (GPa) used by the beam for both axial and bending stiffness."""
    if m.bending_policy is BendingPolicy.USE_E_Z:
        return m.e_z
    if m.bending_policy is BendingPolicy.USE_E_XY:
        return m.e_xy
    return math.sqrt(m.e_xy * m.e_z)


def material_from_dict(data: dict) -> MaterialModel:
    """Build a material from a JSON object; a missing ``g`` falls back to Huber."""
    unknown = set(data) - {"e_xy", "e_z", "nu", "g", "bending_policy"}
    if unknown:
        raise ValueError(f"unknown material fields: {sorted(unknown)}")
    e_xy, e_z = float(data["e_xy"]), float(data["e_z"])
    nu = float(data.get("nu", SWEEP_NU))
    g = data.get("g")
    if g is None:
        g = huber_shear_modulus(e_xy, e_z, nu, nu)
    return MaterialModel(e_xy, e_z, nu, float(g), data.get("bending_policy", "use_e_z"))

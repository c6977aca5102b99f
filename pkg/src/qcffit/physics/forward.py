"""Unpolarized fourfold photon electroproduction cross section at twist-2.

The model prediction decomposes as

    F(phi) = F_BH(phi) + F_INT(phi; ReH, ReE, ReHt) + dvcs_const,

where F_BH carries no fit parameters, F_INT is linear in the three real CFFs,
and the whole DVCS-squared contribution is absorbed into the phi-independent
constant dvcs_const (quoted post-prefactor, i.e. in the same nb/GeV^4 units as
F itself).  Each harmonic tower is assembled with the global prefactor

    alpha^3 xB y^2 / (8 pi Q^4 sqrt(1+eps2))

and converted to nb/GeV^4.  Public entry points take phi in degrees (Trento
convention); radians are used internally.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import SingularityError
from .bkm import (
    bh_coefficients,
    interference_cff_weights,
    kinematic_factors,
    propagator_product,
)
from .constants import DEFAULT_CONSTANTS, PhysicsConstants
from .form_factors import FormFactors
from .kinematics import Kinematics

_PROPAGATOR_TOL = 1e-10


@dataclass(frozen=True)
class CFFSet:
    """The four fit targets at one kinematic bin."""

    ReH: float
    ReE: float
    ReHt: float
    dvcs_const: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ReH, self.ReE, self.ReHt, self.dvcs_const])

    @staticmethod
    def from_array(values) -> "CFFSet":
        reh, ree, reht, dvcs = (float(v) for v in values)
        return CFFSet(reh, ree, reht, dvcs)


def cross_section_prefactor(kin: Kinematics,
                            constants: PhysicsConstants = DEFAULT_CONSTANTS) -> float:
    """Global prefactor alpha^3 xB y^2 / (8 pi Q^4 sqrt(1+eps2)) in GeV^-4."""
    a = constants.alpha_em
    return a ** 3 * kin.xB * kin.y ** 2 / (
        8.0 * np.pi * kin.Q2 ** 2 * np.sqrt(1.0 + kin.eps2)
    )


def _propagators_checked(kin: Kinematics, K: float, phi_rad):
    p1, p2 = propagator_product(kin, K, phi_rad)
    prod = np.atleast_1d(p1 * p2)
    if np.any(np.abs(prod) < _PROPAGATOR_TOL) or np.min(prod) * np.max(prod) < 0:
        raise SingularityError(
            f"lepton propagator product crosses zero on the phi grid (min |P1 P2| = "
            f"{float(np.min(np.abs(prod))):.3e})"
        )
    return prod


def _restore_shape(values: np.ndarray, phi_deg):
    if np.isscalar(phi_deg) or np.ndim(phi_deg) == 0:
        return float(values[0])
    return values


def bh_term(kin: Kinematics, ff: FormFactors, phi_deg,
            constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """Bethe-Heitler contribution in nb/GeV^4; strictly positive, no fit parameters."""
    phi = np.radians(np.atleast_1d(np.asarray(phi_deg, dtype=float)))
    K, _, _ = kinematic_factors(kin)
    prod = _propagators_checked(kin, K, phi)
    c0, c1, c2 = bh_coefficients(kin, ff, K, constants)
    series = c0 + c1 * np.cos(phi) + c2 * np.cos(2.0 * phi)
    amp = series / (kin.xB ** 2 * kin.y ** 2 * (1.0 + kin.eps2) ** 2 * kin.t * prod)
    out = cross_section_prefactor(kin, constants) * constants.gev2_to_nb * amp
    return _restore_shape(out, phi_deg)


def interference_term(kin: Kinematics, ff: FormFactors, cffs: CFFSet, phi_deg,
                      constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """BH-DVCS interference in nb/GeV^4; linear in (ReH, ReE, ReHt)."""
    base = interference_basis(kin, ff, phi_deg, constants)
    out = base @ np.array([cffs.ReH, cffs.ReE, cffs.ReHt])
    return _restore_shape(out, phi_deg)


def interference_basis(kin: Kinematics, ff: FormFactors, phi_deg,
                       constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Matrix G of shape (n_phi, 3) with F_INT = G @ (ReH, ReE, ReHt)."""
    phi = np.radians(np.atleast_1d(np.asarray(phi_deg, dtype=float)))
    K, _, _ = kinematic_factors(kin)
    prod = _propagators_checked(kin, K, phi)
    weights = interference_cff_weights(kin, ff, constants)  # (4, 3)
    harmonics = np.cos(np.outer(phi, np.arange(4)))          # (n_phi, 4)
    scale = cross_section_prefactor(kin, constants) * constants.gev2_to_nb / (
        kin.xB * kin.y ** 3 * kin.t
    )
    return (scale / prod)[:, None] * (harmonics @ weights)


def forward_model(kin: Kinematics, ff: FormFactors, cffs: CFFSet, phi_deg,
                  constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """Full prediction F = BH + interference + dvcs_const in nb/GeV^4."""
    return (
        bh_term(kin, ff, phi_deg, constants)
        + interference_term(kin, ff, cffs, phi_deg, constants)
        + cffs.dvcs_const
    )


def affine_forward_map(kin: Kinematics, ff: FormFactors, phi_deg,
                       constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """Precomputed affine structure of the forward model on a phi grid.

    Returns (bh, basis) with bh shape (n_phi,) and basis shape (n_phi, 3) so

        F(phi_i; cffs) = bh_i + basis_i . (ReH, ReE, ReHt) + dvcs_const.

    The map is evaluated once per bin; repeated loss/metric evaluations then
    cost a handful of flops per point.
    """
    phi_arr = np.atleast_1d(np.asarray(phi_deg, dtype=float))
    bh = bh_term(kin, ff, phi_arr, constants)
    basis = interference_basis(kin, ff, phi_arr, constants)
    return bh, basis

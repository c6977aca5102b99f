"""Derived kinematics for a fixed-target electroproduction setting.

Variables follow the usual DIS/DVCS conventions: beam energy k (GeV), photon
virtuality Q^2 (GeV^2), Bjorken xB, momentum transfer t < 0 (GeV^2).  Derived
quantities are

    y    = Q^2 / (2 M k xB)        lepton energy fraction,
    eps2 = 4 xB^2 M^2 / Q^2,
    xi   = xB / (2 - xB)           skewness at leading twist.

Azimuthal angles use the Trento convention, stored in degrees at the I/O
boundary and radians inside the amplitude code.
"""

from dataclasses import dataclass

from ..errors import DomainError
from .constants import DEFAULT_CONSTANTS, PhysicsConstants

# Leading-twist validity cuts applied when cut enforcement is requested.
Q2_MIN_CUT = 1.5
ABS_T_OVER_Q2_MAX = 0.25


@dataclass(frozen=True)
class Kinematics:
    """One (k, Q2, xB, t) setting with its derived quantities."""

    k: float
    Q2: float
    xB: float
    t: float
    y: float
    eps2: float
    xi: float


def derive_kinematics(
    k: float,
    Q2: float,
    xB: float,
    t: float,
    constants: PhysicsConstants = DEFAULT_CONSTANTS,
    enforce_cuts: bool = False,
) -> Kinematics:
    """Validate raw inputs and populate the derived kinematic quantities.

    Raises DomainError when the raw inputs are unphysical, when the derived
    y falls outside (0, 1), or -- with enforce_cuts -- when the twist-2 cuts
    Q^2 > 1.5 GeV^2, |t|/Q^2 <= 0.25 fail.
    """
    if Q2 <= 0:
        raise DomainError(f"Q2 must be positive, got {Q2}")
    if not 0 < xB < 1:
        raise DomainError(f"xB must lie in (0, 1), got {xB}")
    if t >= 0:
        raise DomainError(f"t must be negative, got {t}")
    if k <= 0:
        raise DomainError(f"beam energy must be positive, got {k}")

    m = constants.proton_mass
    y = Q2 / (2.0 * m * k * xB)
    if not 0 < y < 1:
        raise DomainError(f"derived y={y:.6g} outside (0, 1) for k={k}, Q2={Q2}, xB={xB}")
    eps2 = 4.0 * xB * xB * m * m / Q2
    xi = xB / (2.0 - xB)

    if enforce_cuts:
        if Q2 <= Q2_MIN_CUT:
            raise DomainError(f"twist-2 cut failed: Q2={Q2} <= {Q2_MIN_CUT} GeV^2")
        if abs(t) / Q2 > ABS_T_OVER_Q2_MAX:
            raise DomainError(
                f"twist-2 cut failed: |t|/Q2={abs(t) / Q2:.4f} > {ABS_T_OVER_Q2_MAX}"
            )

    return Kinematics(k=k, Q2=Q2, xB=xB, t=t, y=y, eps2=eps2, xi=xi)

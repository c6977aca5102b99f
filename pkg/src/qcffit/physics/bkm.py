"""Fourier coefficients of the unpolarized BH and BH-DVCS interference terms.

Everything transcription-sensitive lives in this one file.  Sources:

* Bethe-Heitler coefficients c0/c1/c2 and the lepton propagators: BKM 2002
  (Belitsky, Mueller, Kirchner, Nucl. Phys. B629 (2002) 323), Eqs. (25),
  (28)-(31), (35)-(37).
* Interference coefficients: BKM 2010 (Belitsky, Mueller, Phys. Rev. D 82
  (2010) 074010), Eq. (2.35) restricted to the helicity-conserving (++)
  amplitudes of an unpolarized beam and target, i.e. the cos(n phi) towers
  C_{++}^n, C_{++}^{V,n}, C_{++}^{A,n} for n = 0..3.  Twist-3 (0+) and gluon
  transversity (-+) towers are dropped.
* The K / Ktilde normalization follows the convention of the BKM10 fitting
  literature: Ktilde carries the sqrt((1-y-eps2 y^2/4)/(1-y+eps2 y^2/4))
  factor and K^2 = Ktilde^2 (1-y+eps2 y^2/4)/Q^2, which reproduces the BKM
  2002 K^2 exactly.

All coefficients at fixed kinematics are plain numbers; only the propagators
depend on phi.  The interference coefficients are returned as linear weights
on (ReH, ReE, ReHt) so that downstream code can exploit the affine structure
of the cross section in the fitted quantities.
"""

import numpy as np

from ..errors import DomainError
from .constants import DEFAULT_CONSTANTS, PhysicsConstants
from .form_factors import FormFactors
from .kinematics import Kinematics


def t_minimum(Q2: float, xB: float, eps2: float) -> float:
    """Kinematic boundary t_min (BKM 2002 Eq. (31)); physical bins have t <= t_min."""
    re = np.sqrt(1.0 + eps2)
    return -Q2 * (2.0 * (1.0 - xB) * (1.0 - re) + eps2) / (4.0 * xB * (1.0 - xB) + eps2)


def kinematic_factors(kin: Kinematics):
    """Return (K, Ktilde^2 / Q^2, t_min) for one kinematic setting.

    Raises DomainError outside the physical region t <= t_min.
    """
    Q2, x, t, y, e2 = kin.Q2, kin.xB, kin.t, kin.y, kin.eps2
    tmin = t_minimum(Q2, x, e2)
    if t > tmin:
        raise DomainError(f"t={t:.5g} above kinematic boundary t_min={tmin:.5g}")
    a_minus = 1.0 - y - y * y * e2 / 4.0
    a_plus = 1.0 - y + y * y * e2 / 4.0
    if a_minus <= 0 or a_plus <= 0:
        raise DomainError(f"y={y:.5g} too large for eps2={e2:.5g}")
    ktilde2 = (
        (tmin - t)
        * ((1.0 - x) * np.sqrt(1.0 + e2) + (t - tmin) * (e2 + 4.0 * x * (1.0 - x)) / (4.0 * Q2))
        * a_minus
        / a_plus
    )
    k2 = ktilde2 * a_plus / Q2
    if ktilde2 < 0 or k2 < 0:
        raise DomainError("negative K^2; kinematics outside the physical region")
    return float(np.sqrt(k2)), float(ktilde2 / Q2), float(tmin)


def propagator_product(kin: Kinematics, K: float, phi):
    """Lepton propagators P1(phi), P2(phi) (BKM 2002 Eqs. (28)-(29)).

    phi in radians, scalar or array.
    """
    Q2, x, t, y, e2 = kin.Q2, kin.xB, kin.t, kin.y, kin.eps2
    phi = np.asarray(phi, dtype=float)
    kd = -(Q2 / (2.0 * y * (1.0 + e2))) * (
        1.0
        + 2.0 * K * np.cos(phi)
        - (t / Q2) * (1.0 - x * (2.0 - y) + 0.5 * y * e2)
        + 0.5 * y * e2
    )
    p1 = 1.0 + 2.0 * kd / Q2
    p2 = (-2.0 * kd + t) / Q2
    return p1, p2


def bh_coefficients(kin: Kinematics, ff: FormFactors, K: float,
                    constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """Unpolarized-target BH coefficients (c0, c1, c2) of BKM 2002 Eqs. (35)-(37)."""
    Q2, x, t, y, e2 = kin.Q2, kin.xB, kin.t, kin.y, kin.eps2
    m2 = constants.proton_mass ** 2
    f1, f2 = ff.F1, ff.F2
    a_ff = f1 * f1 - (t / (4.0 * m2)) * f2 * f2
    b_ff = (f1 + f2) ** 2
    tq = t / Q2

    c0 = (
        8.0 * K * K * ((2.0 + 3.0 * e2) * (Q2 / t) * a_ff + 2.0 * x * x * b_ff)
        + (2.0 - y) ** 2
        * (
            (2.0 + e2)
            * ((4.0 * x * x * m2 / t) * (1.0 + tq) ** 2 + 4.0 * (1.0 - x) * (1.0 + x * tq))
            * a_ff
            + 4.0 * x * x
            * (x + (1.0 - x + 0.5 * e2) * (1.0 - tq) ** 2 - x * (1.0 - 2.0 * x) * tq * tq)
            * b_ff
        )
        + 8.0 * (1.0 + e2) * (1.0 - y - e2 * y * y / 4.0)
        * (2.0 * e2 * (1.0 - t / (4.0 * m2)) * a_ff - x * x * (1.0 - tq) ** 2 * b_ff)
    )
    c1 = 8.0 * K * (2.0 - y) * (
        (4.0 * x * x * m2 / t - 2.0 * x - e2) * a_ff
        + 2.0 * x * x * (1.0 - (1.0 - 2.0 * x) * tq) * b_ff
    )
    c2 = 8.0 * x * x * K * K * ((4.0 * m2 / t) * a_ff + 2.0 * b_ff)
    return float(c0), float(c1), float(c2)


def interference_towers(kin: Kinematics, K: float, ktq: float, tmin: float):
    """Kinematic towers (C_n, C_n^V, C_n^A) for n = 0..3 (BKM 2010 Eq. (2.35)/(A1)).

    ktq is Ktilde^2/Q^2.  Returns three length-4 arrays.
    """
    Q2, x, t, y, e2 = kin.Q2, kin.xB, kin.t, kin.y, kin.eps2
    re = np.sqrt(1.0 + e2)
    ee = (1.0 + e2) ** 2
    re5 = re ** 5
    tq = t / Q2
    a = 1.0 - y - e2 * y * y / 4.0
    tpq = (t - tmin) / Q2

    c0 = -(4.0 * (2.0 - y) * (1.0 + re) / ee) * (
        ktq * (2.0 - y) ** 2 / re
        + tq * a * (2.0 - x)
        * (1.0 + (2.0 * x * (2.0 - x + 0.5 * (re - 1.0) + 0.5 * e2 / x) * tq + e2)
           / ((2.0 - x) * (1.0 + re)))
    )
    c0_v = (8.0 * (2.0 - y) * x * tq / ee) * (
        (2.0 - y) ** 2 * (ktq / re)
        + a * 0.5 * (1.0 + re) * (1.0 + tq) * (1.0 + (re - 1.0 + 2.0 * x) * tq / (1.0 + re))
    )
    c0_a = (8.0 * (2.0 - y) * tq / ee) * (
        ktq * (2.0 - y) ** 2 * 0.5 * (1.0 + re - 2.0 * x) / re
        + a * (0.5 * (1.0 + re)
               * (1.0 + re - x + (re - 1.0 + x * (3.0 + re - 2.0 * x) / (1.0 + re)) * tq)
               - 2.0 * ktq)
    )

    c1 = -(16.0 * K * a / re5) * (
        (1.0 + (1.0 - x) * 0.5 * (re - 1.0) / x + 0.25 * e2 / x) * x * tq - 0.75 * e2
    ) - 4.0 * K * (2.0 - 2.0 * y + y * y + 0.5 * e2 * y * y) * ((1.0 + re - e2) / re5) * (
        1.0 - (1.0 - 3.0 * x) * tq + (1.0 - re + 3.0 * e2) * x * tq / (1.0 + re - e2)
    )
    c1_v = (16.0 * K * x * tq / re5) * (
        (2.0 - y) ** 2 * (1.0 - (1.0 - 2.0 * x) * tq) + a * (1.0 + re - 2.0 * x) * tpq * 0.5
    )
    c1_a = -(16.0 * K * tq / ee) * (
        a * (1.0 - (1.0 - 2.0 * x) * tq + (4.0 * x * (1.0 - x) + e2) * tpq / (4.0 * re))
        - (2.0 - y) ** 2
        * (1.0 - 0.5 * x + 0.25 * (1.0 + re - 2.0 * x) * (1.0 - tq)
           + (4.0 * x * (1.0 - x) + e2) * tpq / (2.0 * re))
    )

    c2 = (8.0 * (2.0 - y) * a / ee) * (
        2.0 * e2 * ktq / (re * (1.0 + re))
        + x * tq * tpq * (1.0 - x - 0.5 * (re - 1.0) + 0.5 * e2 / x)
    )
    c2_v = (8.0 * (2.0 - y) * a / ee) * x * tq * (
        4.0 * ktq / re + 0.5 * (1.0 + re - 2.0 * x) * (1.0 + tq) * tpq
    )
    c2_a = (4.0 * (2.0 - y) * a / ee) * tq * (
        4.0 * (1.0 - 2.0 * x) * ktq / re - (3.0 - re - 2.0 * x + e2 / x) * x * tpq
    )

    c3 = -(8.0 * K * a * (re - 1.0) / re5) * ((1.0 - x) * tq + 0.5 * (re - 1.0) * (1.0 + tq))
    c3_v = -(8.0 * K * a * x * tq / re5) * (re - 1.0 + (1.0 + re - 2.0 * x) * tq)
    c3_a = (16.0 * K * a * tq * tpq / re5) * (x * (1.0 - x) + 0.25 * e2)

    return (
        np.array([c0, c1, c2, c3]),
        np.array([c0_v, c1_v, c2_v, c3_v]),
        np.array([c0_a, c1_a, c2_a, c3_a]),
    )


def interference_cff_weights(kin: Kinematics, ff: FormFactors,
                             constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Linear weights W (shape (4, 3)) with c_n^I = W[n] . (ReH, ReE, ReHt).

    Combines the kinematic towers with the three CFF combinations

        C   = F1 H + xi (F1+F2) Ht - t/(4 M^2) F2 E,
        C^V = r (F1+F2) (H + E),
        C^A = r (F1+F2) Ht,       r = xB / (2 - xB + xB t/Q^2),

    where xi = xB/(2-xB) is the leading-twist skewness.
    """
    K, ktq, tmin = kinematic_factors(kin)
    cn, cn_v, cn_a = interference_towers(kin, K, ktq, tmin)
    m2 = constants.proton_mass ** 2
    f1, f2 = ff.F1, ff.F2
    fsum = f1 + f2
    r_vt = kin.xB / (2.0 - kin.xB + kin.xB * kin.t / kin.Q2)

    w = np.empty((4, 3))
    w[:, 0] = cn * f1 + cn_v * r_vt * fsum                       # ReH
    w[:, 1] = -cn * (kin.t / (4.0 * m2)) * f2 + cn_v * r_vt * fsum  # ReE
    w[:, 2] = cn * kin.xi * fsum + cn_a * r_vt * fsum            # ReHt
    return w

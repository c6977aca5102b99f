"""Proton elastic form factors in Kelly's rational parametrization.

Sachs form factors follow J. J. Kelly, Phys. Rev. C 70, 068202 (2004):

    G(tau) = (1 + a1 tau) / (1 + b1 tau + b2 tau^2 + b3 tau^3),

with tau = -t / (4 M^2), fitted separately for G_E and G_M / mu_p.  Dirac and
Pauli form factors are recovered through

    F1 = (G_E + tau G_M) / (1 + tau),    F2 = (G_M - G_E) / (1 + tau),

so that F1(0) = 1 and F2(0) = kappa_p exactly.
"""

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicsConstants

# Kelly (2004), Table I. Electric: a1, b1, b2, b3; magnetic: same shape, G_M/mu_p.
KELLY_GE = (-0.24, 10.98, 12.82, 21.97)
KELLY_GM = (0.12, 10.97, 18.86, 6.55)


@dataclass(frozen=True)
class FormFactors:
    """Dirac (F1) and Pauli (F2) form factors evaluated at one t."""

    F1: float
    F2: float


def _kelly_ratio(tau, coeffs):
    a1, b1, b2, b3 = coeffs
    return (1.0 + a1 * tau) / (1.0 + tau * (b1 + tau * (b2 + tau * b3)))


def kelly_form_factors(t: float, constants: PhysicsConstants = DEFAULT_CONSTANTS) -> FormFactors:
    """Evaluate (F1, F2) at momentum transfer t <= 0 (GeV^2)."""
    if t > 0:
        raise ValueError(f"t must be <= 0, got {t}")
    m2 = constants.proton_mass ** 2
    tau = -t / (4.0 * m2)
    ge = _kelly_ratio(tau, KELLY_GE)
    gm = constants.mu_p * _kelly_ratio(tau, KELLY_GM)
    f1 = (ge + tau * gm) / (1.0 + tau)
    f2 = (gm - ge) / (1.0 + tau)
    return FormFactors(F1=float(f1), F2=float(f2))


def kelly_form_factors_array(t, constants: PhysicsConstants = DEFAULT_CONSTANTS):
    """Vectorized (F1, F2) for an array of t values."""
    t = np.asarray(t, dtype=float)
    if np.any(t > 0):
        raise ValueError("all t must be <= 0")
    m2 = constants.proton_mass ** 2
    tau = -t / (4.0 * m2)
    ge = _kelly_ratio(tau, KELLY_GE)
    gm = constants.mu_p * _kelly_ratio(tau, KELLY_GM)
    return (ge + tau * gm) / (1.0 + tau), (gm - ge) / (1.0 + tau)

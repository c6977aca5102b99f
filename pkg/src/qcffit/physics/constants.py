"""Physical constants used by the forward model.

All cross sections produced by this package are quoted in nb/GeV^4 for the
fourfold differential d^4sigma / (dxB dQ^2 d|t| dphi); GEV2_TO_NB is the single
conversion constant applied at the end of the amplitude assembly.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicsConstants:
    """Single source of truth for the constants entering the cross section.

    proton_mass : GeV
    alpha_em    : fine-structure constant (dimensionless)
    kappa_p     : proton anomalous magnetic moment, fixes F2(0)
    gev2_to_nb  : conversion factor GeV^-2 -> nb
    """

    proton_mass: float = 0.938272
    alpha_em: float = 1.0 / 137.036
    kappa_p: float = 1.79285
    gev2_to_nb: float = 0.389379e6

    def __post_init__(self):
        if not self.proton_mass > 0:
            raise ValueError("proton_mass must be positive")
        if not 0 < self.alpha_em < 0.01:
            raise ValueError("alpha_em outside (0, 0.01)")

    @property
    def mu_p(self) -> float:
        """Proton magnetic moment G_M(0) = 1 + kappa_p."""
        return 1.0 + self.kappa_p


DEFAULT_CONSTANTS = PhysicsConstants()

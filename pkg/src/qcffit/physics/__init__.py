"""BKM10 twist-2 forward model for unpolarized DVCS + BH cross sections."""

from .constants import DEFAULT_CONSTANTS, PhysicsConstants
from .form_factors import FormFactors, kelly_form_factors
from .kinematics import Kinematics, derive_kinematics
from .forward import (
    CFFSet,
    affine_forward_map,
    bh_term,
    cross_section_prefactor,
    forward_model,
    interference_basis,
    interference_term,
)

__all__ = [
    "DEFAULT_CONSTANTS",
    "PhysicsConstants",
    "FormFactors",
    "kelly_form_factors",
    "Kinematics",
    "derive_kinematics",
    "CFFSet",
    "affine_forward_map",
    "bh_term",
    "cross_section_prefactor",
    "forward_model",
    "interference_basis",
    "interference_term",
]

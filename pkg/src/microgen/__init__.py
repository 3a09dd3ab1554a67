"""Generating-function calculus for symplectic micromorphisms in cotangent charts."""

from .compose import monicity_probe, star_numeric, star_series
from .dynamics import (
    PhasePoint,
    energy_drift,
    evolution_relation_point,
    fiber_decomposition,
    recover_flow,
    reference_flow,
    symplecticity_defect,
)
from .expr import lower_to_jet, parse
from .genfun import (
    CoreMap,
    GeneratingFunction,
    RelationPoint,
    canonical_embedding,
    core_of,
    cotangent_lift,
    deformation_map,
    identity_genfun,
    lagrangian_defect,
    morse_bott_check,
    sample_relation,
    schwartz,
    schwartz_inverse,
)
from .hamjac import (
    Hamiltonian,
    core_J,
    core_form_check,
    energy_monoid_genfun,
    freeze_time,
    hamiltonian_from_genfun,
    hj_series,
    semigroup_defect,
)
from .jetcalc import Jet, jet_compose, jet_elementary
from .liegroup import MatLieElement, assoc_defect, bch, mat_exp, mat_log, symmetry_genfun

__version__ = "0.1.0"

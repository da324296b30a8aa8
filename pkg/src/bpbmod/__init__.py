"""Certified Bishop-Phelps-Bollobas moduli for operators between
finite-dimensional real polyhedral Banach spaces."""

from .beta import BetaStructure, linfty_isometry, minimal_rho, verify_beta
from .errors import (
    BpbError,
    ConstructionError,
    DimensionMismatchError,
    InputError,
    InvalidSpaceError,
    InvalidStructureError,
    RefusalError,
    UnsupportedDimensionError,
)
from .operators import (
    AttainingPair,
    LinearOperator,
    OperatorPair,
    attains_on_segment,
    classify_pair,
    operator_norm,
)
from .spaces import (
    Face,
    Functional,
    PolyhedralSpace,
    Vector,
    make_space,
    space_from_json,
    space_to_json,
)
from .zoo import (
    HexagonSpaceBundle,
    ZSpaceBundle,
    banach_mazur_upper,
    beta_for_space,
    canonical_beta,
    make_hexagon,
    make_l1,
    make_linf,
    make_r,
    make_z,
    space_from_name,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

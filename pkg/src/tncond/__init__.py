"""Conditioning and perturbation-error analysis of tensor networks."""

from __future__ import annotations

from .conditioning import (
    ConditionNumbers,
    WorstCaseReport,
    average_case_error,
    condition_numbers,
    entrywise_normalize,
    environment_frobenius_sq,
    site_environment_norms,
    worst_case_bound,
    worst_case_solve,
)
from .errors import (
    ConvergenceError,
    DegenerateSite,
    DimensionError,
    InvalidPerturbationBudget,
    LegNotFound,
    NetworkInvalid,
    NotCanonical,
    PartitionError,
    ShapeError,
    TnCondError,
    TooLargeToMaterialize,
    ValidationError,
    VertexNotFound,
)
from .mps import (
    BlockNorms,
    Mps,
    all_site_bound_canonical,
    all_site_bound_general,
    block_norms,
    canonicalize,
    comparison_factor_mps,
    is_canonical_mps,
    random_mps,
    single_site_bound,
    truncate_all_with_canonicalization,
    worst_case_construction,
)
from .network import (
    Edge,
    EnvironmentMatrix,
    OpenLeg,
    TensorNetwork,
    contract_network,
    cut_edges,
    environment_matrix,
    is_canonical,
    jacobian_block,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
    sub_network,
    verify_matvec_identity,
)
from .peps import (
    Peps,
    canonical_peps_random,
    column_mps,
    columns_to_mps,
    comparison_factor_peps,
    peps_bound_canonical,
    peps_bound_general,
    random_peps,
)
from .perturb import (
    PerturbationSet,
    apply,
    measure_error,
    sample_eps_perturbation,
    sample_variance_perturbation,
)
from .tensor import (
    CenteredUniform,
    DenseTensor,
    Matricization,
    Uniform,
    contract_pair,
    frobenius_norm,
    kron,
    matricize,
    random_tensor,
    spectral_norm,
)

__version__ = "0.1.0"

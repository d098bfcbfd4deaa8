"""Numerical laboratory for strongly coupled Schrodinger systems."""

__version__ = "0.1.0"

from .grids import Grid1D, TimeGrid
from .model import (
    CouplingMatrix,
    PotentialSet,
    SourcePair,
    transform,
    transform_sources,
    validate_coupling,
    validate_potentials,
)
from .weights import (
    WeightFunction,
    WeightSystem,
    build_boundary_psi,
    build_internal_psi,
    certify,
)
from .forward import (
    BoundaryData,
    ForwardProblem,
    observe_boundary,
    observe_internal,
    solve,
    spectral_oracle,
)
from .carleman import (
    CarlemanReport,
    assemble_operators,
    evaluate_boundary,
    evaluate_internal,
    manufactured_family,
    sweep,
)
from .inverse import (
    StabilityRecord,
    even_conjugate_extend,
    ip1_stability,
    ip2_stability,
    reconstruct,
    time_reversed_derivative,
)

__all__ = [
    "__version__",
    "Grid1D",
    "TimeGrid",
    "CouplingMatrix",
    "PotentialSet",
    "SourcePair",
    "transform",
    "transform_sources",
    "validate_coupling",
    "validate_potentials",
    "WeightFunction",
    "WeightSystem",
    "build_boundary_psi",
    "build_internal_psi",
    "certify",
    "BoundaryData",
    "ForwardProblem",
    "observe_boundary",
    "observe_internal",
    "solve",
    "spectral_oracle",
    "CarlemanReport",
    "assemble_operators",
    "evaluate_boundary",
    "evaluate_internal",
    "manufactured_family",
    "sweep",
    "StabilityRecord",
    "even_conjugate_extend",
    "ip1_stability",
    "ip2_stability",
    "reconstruct",
    "time_reversed_derivative",
]

"""speclab: a numerical laboratory for finite-volume random Schrodinger operators.

Cell-centered finite differences on a box, alloyed random potentials, and
quantitative spectral checks: eigenvalue-count bounds, spectral averaging,
crossing-based spectral shift functions, and Lipschitz continuity of the
finite-volume density of states.
"""

from .errors import (
    BranchMonotonicityError,
    ConfigError,
    PreconditionError,
    RefineGridError,
    UnstableEvaluationError,
)
from .kernels import BACKEND
from .operator import (
    BoxDomain,
    DisorderRealization,
    OperatorFamily,
    SingleSite,
    SymmetricOperator,
    assemble_family,
    build_laplacian,
    build_potential,
    sample_disorder,
    single_site_family,
)
from .report import VerificationReport
from .spectral import (
    BranchTrace,
    CrossingRecord,
    EnergyInterval,
    SpectralData,
    birman_schwinger_crossings,
    eigendecompose,
    feynman_hellmann_residual,
    projector_element,
    projector_trace,
    solve_crossing,
    trace_branches,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoxDomain",
    "BranchMonotonicityError",
    "BranchTrace",
    "ConfigError",
    "CrossingRecord",
    "DisorderRealization",
    "EnergyInterval",
    "OperatorFamily",
    "PreconditionError",
    "RefineGridError",
    "SingleSite",
    "SpectralData",
    "SymmetricOperator",
    "UnstableEvaluationError",
    "VerificationReport",
    "assemble_family",
    "birman_schwinger_crossings",
    "build_laplacian",
    "build_potential",
    "eigendecompose",
    "feynman_hellmann_residual",
    "projector_element",
    "projector_trace",
    "sample_disorder",
    "single_site_family",
    "solve_crossing",
    "trace_branches",
    "__version__",
]

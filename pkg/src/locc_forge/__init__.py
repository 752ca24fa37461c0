"""locc-forge: LOCC convertibility, protocol synthesis, and end-to-end
verification for multipartite pure states in generalized Schmidt form."""

from .errors import (
    CapExceeded,
    ConstructionInvalid,
    ConversionImpossible,
    DecompositionFailed,
    InstanceError,
    InternalContradiction,
    LoccForgeError,
    ZeroBranch,
)
from .majorization import (
    DoublyStochasticMatrix,
    Permutation,
    PermutationMixture,
    ProbVector,
    birkhoff_decompose,
    first_violation,
    hlp_matrix,
    is_majorized,
    mixture_for,
    pad_to,
    tail_sum,
    term_count_bound,
)
from .probabilistic import (
    CatalysisResult,
    ConclusivePlan,
    catalysis_search,
    intermediate_state,
    multicopy_check,
    pmax,
    run_conclusive,
    tensor_power,
)
from .protocol import (
    DiagonalOperator,
    MeasurementPlan,
    PlanOutcome,
    ValidationReport,
    build_plan,
    qubit_fast_path,
    synthesize,
    validate,
)
from .simulator import (
    DenseState,
    GeneralizedSchmidtState,
    GsdExtraction,
    GsdWitness,
    Transcript,
    apply_local,
    assemble,
    extract_gsd,
    fidelity,
    run_protocol,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "CatalysisResult",
    "ConclusivePlan",
    "ConstructionInvalid",
    "ConversionImpossible",
    "DecompositionFailed",
    "DenseState",
    "DiagonalOperator",
    "DoublyStochasticMatrix",
    "GeneralizedSchmidtState",
    "GsdExtraction",
    "GsdWitness",
    "InstanceError",
    "InternalContradiction",
    "LoccForgeError",
    "MeasurementPlan",
    "Permutation",
    "PermutationMixture",
    "PlanOutcome",
    "ProbVector",
    "Transcript",
    "ValidationReport",
    "ZeroBranch",
    "apply_local",
    "assemble",
    "birkhoff_decompose",
    "build_plan",
    "catalysis_search",
    "extract_gsd",
    "fidelity",
    "first_violation",
    "hlp_matrix",
    "intermediate_state",
    "is_majorized",
    "mixture_for",
    "multicopy_check",
    "pad_to",
    "pmax",
    "qubit_fast_path",
    "run_conclusive",
    "run_protocol",
    "synthesize",
    "tail_sum",
    "tensor_power",
    "term_count_bound",
    "validate",
]

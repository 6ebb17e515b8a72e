"""Multi-task regression with row sparsity and safe feature screening.

The solver fits all tasks jointly under a grouped penalty that zeroes
entire feature rows. Before each solve along a regularization path, a
screening step bounds every feature's dual correlation over a ball that
provably contains the dual optimum; features whose bound stays below the
activation threshold are discarded exactly, never approximately.
"""

from .core import (
    DualPoint,
    LambdaGrid,
    MultiTaskDataset,
    ScreeningMask,
    WeightMatrix,
    load_dataset,
    save_dataset,
    stack_response,
    validate_dataset,
)
from .dual import (
    DualBall,
    ReferenceSolution,
    dual_ball,
    dual_feasibility_violation,
    dual_from_primal,
    feature_constraint,
    feature_constraint_all,
    lambda_max,
    normal_vector,
)
from .errors import (
    DatasetFormatError,
    DegenerateData,
    DimensionMismatch,
    EmptyDataset,
    LambdaOutOfRange,
    MaxItersExceeded,
    MtlError,
    NoConvergence,
    NonFinite,
    NonPositiveLambda,
    SolverFailure,
    ZeroNormal,
)
from .qp1qc import (
    Qp1qcInstance,
    Qp1qcSolution,
    build_instance,
    build_instances,
    screening_bound,
    screening_bounds,
    screening_scores,
    solve,
    solve_batch,
)
from .screening import (
    PathRecord,
    PathScreeningReport,
    screen_at,
    sequential_path,
    unscreened_path,
)
from .solver import (
    FitResult,
    SolverConfig,
    duality_gap,
    fit,
    kkt_residual,
    objective,
    reduce_frobenius,
    reduce_weighted,
)
from .synth import SynthConfig, generate, write_benchmark

__version__ = "0.1.0"

__all__ = [
    "DatasetFormatError",
    "DegenerateData",
    "DimensionMismatch",
    "DualBall",
    "DualPoint",
    "EmptyDataset",
    "FitResult",
    "LambdaGrid",
    "LambdaOutOfRange",
    "MaxItersExceeded",
    "MtlError",
    "MultiTaskDataset",
    "NoConvergence",
    "NonFinite",
    "NonPositiveLambda",
    "PathRecord",
    "PathScreeningReport",
    "Qp1qcInstance",
    "Qp1qcSolution",
    "ReferenceSolution",
    "ScreeningMask",
    "SolverConfig",
    "SolverFailure",
    "SynthConfig",
    "WeightMatrix",
    "ZeroNormal",
    "build_instance",
    "build_instances",
    "dual_ball",
    "dual_feasibility_violation",
    "dual_from_primal",
    "duality_gap",
    "feature_constraint",
    "feature_constraint_all",
    "fit",
    "generate",
    "kkt_residual",
    "lambda_max",
    "load_dataset",
    "normal_vector",
    "objective",
    "reduce_frobenius",
    "reduce_weighted",
    "save_dataset",
    "screen_at",
    "screening_bound",
    "screening_bounds",
    "screening_scores",
    "sequential_path",
    "solve",
    "solve_batch",
    "stack_response",
    "unscreened_path",
    "validate_dataset",
    "write_benchmark",
    "__version__",
]

"""Greedy quasi-Newton methods with adaptive stepsizes, plus a
communication-light distributed variant and reference baselines."""

from .linalg import (
    DegenerateUpdateError,
    NotPositiveDefiniteError,
    SpdFactor,
    dual_norm,
    symmetrize,
    trace_inner,
    update_factor_rank2,
    weighted_norm,
)
from .broyden import (
    DEFAULT_VARIANT,
    BroydenVariant,
    HessianEstimate,
    HessianOracle,
    OrderingViolationError,
    bfgs,
    broyd,
    corrected_update,
    delta_metric,
    dfp,
    gbroyd,
    gbroyd_tau,
    greedy_vector,
    sigma_metric,
    sr1,
)
from .objectives import (
    CountingObjective,
    LogisticObjective,
    QuadraticObjective,
    SmoothnessConstants,
    computed_constants,
    data_curvature,
    fd_gradient,
    fd_hvp,
    logistic_hessian_lipschitz,
    preset_constants,
)
from .agqn import (
    DIAGNOSTIC_GATE,
    REASON_MAX_ITERS,
    REASON_TOLERANCE,
    AgqnConfig,
    DegenerateStepsizeError,
    IterationRecord,
    SolverResult,
    StepsizePolicy,
    adaptive_step,
    agqn_run,
    alpha_tau,
    beta,
    c_tau_eps,
    lambda_metric,
    resolve_g0,
    warm_start_G0,
)
from .dagqn import (
    DagqnConfig,
    GreedyRecord,
    InfoVector,
    ProtocolError,
    ReplayMismatchError,
    RoundStats,
    comm_account,
    dagqn_run,
    decode_infovec,
    encode_infovec,
    gupdate,
    infovec_scalar_count,
    infvec,
    partition_shards,
    push_scalar_count,
)
from .baselines import (
    BaselineConfig,
    DivergenceError,
    LineSearchError,
    bfgs_wolfe_run,
    nagd_run,
)
from .datasets import (
    Dataset,
    DatasetFormatError,
    load_libsvm,
    parse_libsvm,
    synthesize,
    to_libsvm,
)

__version__ = "0.1.0"

__all__ = [
    "AgqnConfig",
    "BaselineConfig",
    "BroydenVariant",
    "CountingObjective",
    "DEFAULT_VARIANT",
    "DIAGNOSTIC_GATE",
    "DagqnConfig",
    "Dataset",
    "DatasetFormatError",
    "DegenerateStepsizeError",
    "DegenerateUpdateError",
    "DivergenceError",
    "GreedyRecord",
    "HessianEstimate",
    "HessianOracle",
    "InfoVector",
    "IterationRecord",
    "LineSearchError",
    "LogisticObjective",
    "NotPositiveDefiniteError",
    "OrderingViolationError",
    "ProtocolError",
    "QuadraticObjective",
    "REASON_MAX_ITERS",
    "REASON_TOLERANCE",
    "ReplayMismatchError",
    "RoundStats",
    "SmoothnessConstants",
    "SolverResult",
    "SpdFactor",
    "StepsizePolicy",
    "adaptive_step",
    "agqn_run",
    "alpha_tau",
    "beta",
    "bfgs",
    "bfgs_wolfe_run",
    "broyd",
    "c_tau_eps",
    "comm_account",
    "computed_constants",
    "corrected_update",
    "dagqn_run",
    "data_curvature",
    "decode_infovec",
    "delta_metric",
    "dfp",
    "dual_norm",
    "encode_infovec",
    "fd_gradient",
    "fd_hvp",
    "gbroyd",
    "gbroyd_tau",
    "greedy_vector",
    "gupdate",
    "infovec_scalar_count",
    "infvec",
    "lambda_metric",
    "load_libsvm",
    "logistic_hessian_lipschitz",
    "nagd_run",
    "parse_libsvm",
    "partition_shards",
    "preset_constants",
    "push_scalar_count",
    "resolve_g0",
    "sigma_metric",
    "sr1",
    "symmetrize",
    "synthesize",
    "to_libsvm",
    "trace_inner",
    "update_factor_rank2",
    "warm_start_G0",
    "weighted_norm",
    "__version__",
]

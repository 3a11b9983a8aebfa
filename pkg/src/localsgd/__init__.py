"""Deterministic Local SGD simulator and convergence-bound toolkit.

Local SGD runs K stochastic gradient steps per node between parameter
averages. This package simulates it bit-reproducibly on interpolating
problems (shared-optimum quadratics, separable squared hinge, adversarial
lower-bound instances) and checks the measured traces against the known
convergence rates and lower-bound certificates.
"""

from .core import (
    PURPOSE_C_DIRECTION,
    PURPOSE_C_RADIUS,
    PURPOSE_DATASET,
    PURPOSE_PARTITION,
    PURPOSE_PROBE,
    PURPOSE_STEP,
    RECORD_COMM,
    RECORD_EVERY,
    RULE_CONVEX,
    RULE_MANUAL,
    RULE_NONCONVEX,
    RULE_STRONGLY_CONVEX,
    CommSchedule,
    RngStream,
    RunConfig,
    StepsizePolicy,
    StepsizeWarning,
    TraceRecord,
    make_schedule,
    resolve_stepsize,
)
from .problems import (
    EstimateUndefinedError,
    HingeShardLoss,
    InterpolationReport,
    LinSepDataset,
    LocalLoss,
    ProblemInstance,
    QuadraticLoss,
    ZeroLoss,
    c_estimate,
    c_exact_quadratic,
    exact_separator,
    load_dataset_csv,
    make_hinge_problem,
    make_linsep_dataset,
    make_prop1_instance,
    make_prop2_instance,
    make_shared_optimum_quadratic,
    rho_estimate,
    save_dataset_csv,
    verify_interpolation,
)
from .partition import (
    REGIME_EVEN,
    REGIME_PATHOLOGICAL,
    REGIME_WORST_CASE,
    PartitionAssignment,
    load_partition_csv,
    partition_even,
    partition_pathological,
    partition_worst_case,
    save_partition_csv,
)
from .engine import (
    STATUS_COMPLETED,
    STATUS_DIVERGED,
    RunResult,
    load_trace_csv,
    precompute_interpolator,
    run_local_sgd,
    run_many,
    run_minibatch_baseline,
    save_trace_csv,
)
from .analysis import (
    MODEL_GEOMETRIC,
    MODEL_RECIPROCAL,
    BoundReport,
    LemmaReport,
    MeanTrace,
    RateFit,
    SpeedupRow,
    aggregate_traces,
    certify_prop1,
    certify_prop2,
    check_consensus_lemma,
    check_descent_lemma,
    check_lemma1_mean,
    check_lemma1_per_step,
    check_lemma3_per_step,
    check_theorem1,
    check_theorem2,
    check_theorem3,
    fit_rate,
    speedup_table,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "CommSchedule",
    "EstimateUndefinedError",
    "HingeShardLoss",
    "InterpolationReport",
    "LemmaReport",
    "LinSepDataset",
    "LocalLoss",
    "MeanTrace",
    "MODEL_GEOMETRIC",
    "MODEL_RECIPROCAL",
    "PartitionAssignment",
    "ProblemInstance",
    "PURPOSE_C_DIRECTION",
    "PURPOSE_C_RADIUS",
    "PURPOSE_DATASET",
    "PURPOSE_PARTITION",
    "PURPOSE_PROBE",
    "PURPOSE_STEP",
    "QuadraticLoss",
    "RateFit",
    "RECORD_COMM",
    "RECORD_EVERY",
    "REGIME_EVEN",
    "REGIME_PATHOLOGICAL",
    "REGIME_WORST_CASE",
    "RngStream",
    "RULE_CONVEX",
    "RULE_MANUAL",
    "RULE_NONCONVEX",
    "RULE_STRONGLY_CONVEX",
    "RunConfig",
    "RunResult",
    "SpeedupRow",
    "STATUS_COMPLETED",
    "STATUS_DIVERGED",
    "StepsizePolicy",
    "StepsizeWarning",
    "TraceRecord",
    "ZeroLoss",
    "aggregate_traces",
    "c_estimate",
    "c_exact_quadratic",
    "certify_prop1",
    "certify_prop2",
    "check_consensus_lemma",
    "check_descent_lemma",
    "check_lemma1_mean",
    "check_lemma1_per_step",
    "check_lemma3_per_step",
    "check_theorem1",
    "check_theorem2",
    "check_theorem3",
    "exact_separator",
    "fit_rate",
    "load_dataset_csv",
    "load_partition_csv",
    "load_trace_csv",
    "make_hinge_problem",
    "make_linsep_dataset",
    "make_prop1_instance",
    "make_prop2_instance",
    "make_schedule",
    "make_shared_optimum_quadratic",
    "partition_even",
    "partition_pathological",
    "partition_worst_case",
    "precompute_interpolator",
    "resolve_stepsize",
    "rho_estimate",
    "run_local_sgd",
    "run_many",
    "run_minibatch_baseline",
    "save_dataset_csv",
    "save_partition_csv",
    "save_trace_csv",
    "speedup_table",
    "verify_interpolation",
]

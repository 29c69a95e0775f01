"""passn-lab: coverage-aligned training losses and pass@N experiments."""

__version__ = "0.1.0"

from .allocation import (
    AccuracyProfile,
    ConfidenceProfile,
    brute_force_optimal,
    check_order_alignment,
    expected_coverage,
    optimal_confidences,
)
from .bounds import (
    BoundQuery,
    BoundResult,
    case_k_applies,
    lower_bound_closed,
    lower_bound_integer_s,
    upper_bound,
)
from .coverage import (
    CoverageCurve,
    SampleTally,
    coverage_dataset,
    coverage_from_pass1,
    coverage_single,
    neg_log_coverage_loss,
    pass_at_n_estimate,
)
from .errors import (
    DomainError,
    InfeasibleBound,
    InfiniteLossError,
    StreamExhausted,
    TrainingDiverged,
)
from .losses import (
    FilterPolicy,
    LossSpec,
    dco_factor,
    dco_loss,
    filter_batch,
    focal_dloss_dp,
    focal_loss,
    full_proof_factor,
    stepwise_factor,
)

__all__ = [
    "__version__",
    "AccuracyProfile",
    "BoundQuery",
    "BoundResult",
    "ConfidenceProfile",
    "CoverageCurve",
    "DomainError",
    "FilterPolicy",
    "InfeasibleBound",
    "InfiniteLossError",
    "LossSpec",
    "SampleTally",
    "StreamExhausted",
    "TrainingDiverged",
    "brute_force_optimal",
    "case_k_applies",
    "check_order_alignment",
    "coverage_dataset",
    "coverage_from_pass1",
    "coverage_single",
    "dco_factor",
    "dco_loss",
    "expected_coverage",
    "filter_batch",
    "focal_dloss_dp",
    "focal_loss",
    "full_proof_factor",
    "lower_bound_closed",
    "lower_bound_integer_s",
    "neg_log_coverage_loss",
    "optimal_confidences",
    "pass_at_n_estimate",
    "stepwise_factor",
    "upper_bound",
]

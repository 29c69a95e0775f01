"""Toy chain-of-thought model: exact and Monte-Carlo marginal confidence.

A CoT model factors as p(trace | problem) * p(answer | trace, problem)
over small categorical alphabets, so the trace-marginalized answer
confidence p(y|x) = sum_c p(c|x) p(y|c,x) is exactly computable -- which
makes the Monte-Carlo estimate used during batch filtering testable
against its own target.  Answers are judged independently of the trace
that produced them, hence the marginalization.

Batch construction estimates each candidate's marginal confidence from K
sampled (trace, answer) pairs, drops the candidate when F(N', estimate)
falls below a threshold (the confident ones), and reuses the same
estimate as the kept example's gradient weight.
"""

from dataclasses import dataclass

import numpy as np

from .coverage import CoverageCurve
from .errors import DomainError, StreamExhausted, TrainingDiverged
from .losses import LossSpec, dco_factor
from .seeding import derive_rng, derive_seed

__all__ = [
    "CoTModel",
    "CotPolicy",
    "CotExample",
    "McEstimate",
    "KeptCandidate",
    "CotTrainConfig",
    "CotEpochSnapshot",
    "CotTrajectory",
    "exact_marginal",
    "mc_marginal",
    "mode_confidence",
    "build_dcoa_batch",
    "train_cot",
]


def _check_rows_sum_to_one(rows: np.ndarray, what: str):
    if np.any(rows < 0.0):
        raise DomainError(f"{what} must be nonnegative")
    if np.any(np.abs(rows.sum(axis=-1) - 1.0) > 1e-10):
        raise DomainError(f"{what} rows must sum to 1")


@dataclass(frozen=True, eq=False)
class CoTModel:
    """Distributions p(trace|problem) and p(answer|trace, problem)."""

    trace_probs: np.ndarray  # (problems x traces)
    answer_probs: np.ndarray  # (problems x traces x answers)

    def __post_init__(self):
        tp = np.asarray(self.trace_probs, dtype=np.float64)
        ap = np.asarray(self.answer_probs, dtype=np.float64)
        if tp.ndim != 2 or ap.ndim != 3 or ap.shape[:2] != tp.shape:
            raise DomainError("trace and answer tables have incompatible shapes")
        _check_rows_sum_to_one(tp, "trace probabilities")
        _check_rows_sum_to_one(ap, "answer probabilities")
        object.__setattr__(self, "trace_probs", tp)
        object.__setattr__(self, "answer_probs", ap)

    @property
    def problem_count(self):
        return self.trace_probs.shape[0]

    @property
    def trace_count(self):
        return self.trace_probs.shape[1]

    @property
    def answer_count(self):
        return self.answer_probs.shape[2]


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(eq=False)
class CotPolicy:
    """Trainable logits behind a CoTModel."""

    trace_logits: np.ndarray  # (problems x traces)
    answer_logits: np.ndarray  # (problems x traces x answers)

    def __post_init__(self):
        self.trace_logits = np.asarray(self.trace_logits, dtype=np.float64).copy()
        self.answer_logits = np.asarray(self.answer_logits, dtype=np.float64).copy()
        if (
            self.trace_logits.ndim != 2
            or self.answer_logits.ndim != 3
            or self.answer_logits.shape[:2] != self.trace_logits.shape
        ):
            raise DomainError("trace and answer logits have incompatible shapes")

    @classmethod
    def uniform(cls, problems: int, traces: int, answers: int) -> "CotPolicy":
        return cls(np.zeros((problems, traces)), np.zeros((problems, traces, answers)))

    def to_model(self) -> CoTModel:
        return CoTModel(_softmax(self.trace_logits), _softmax(self.answer_logits))


@dataclass(frozen=True)
class CotExample:
    """A training triplet: problem, golden trace, golden answer."""

    problem: int
    trace: int
    answer: int


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo frequency estimate with its binomial standard error."""

    value: float
    sample_count: int
    standard_error: float = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0 or self.sample_count < 1:
            raise DomainError("estimate must lie in [0, 1] with a positive K")
        se = float(np.sqrt(self.value * (1.0 - self.value) / self.sample_count))
        object.__setattr__(self, "standard_error", se)


def exact_marginal(model: CoTModel, x: int, y: int) -> float:
    """Trace-marginalized answer confidence sum_c p(c|x) p(y|c,x)."""
    if not 0 <= x < model.problem_count or not 0 <= y < model.answer_count:
        raise DomainError(f"indices ({x}, {y}) outside the model tables")
    return float(model.trace_probs[x] @ model.answer_probs[x, :, y])


def _sample_answers(model: CoTModel, x: int, k: int, rng) -> np.ndarray:
    """K sampled final answers: trace first, then answer given trace."""
    trace_cum = np.cumsum(model.trace_probs[x])
    traces = np.minimum(
        np.searchsorted(trace_cum, rng.random(k), side="right"),
        model.trace_count - 1,
    )
    answer_cum = np.cumsum(model.answer_probs[x], axis=1)
    draws = rng.random(k)
    answers = np.empty(k, dtype=np.int64)
    for i in range(k):
        answers[i] = min(
            int(np.searchsorted(answer_cum[traces[i]], draws[i], side="right")),
            model.answer_count - 1,
        )
    return answers


def mc_marginal(model: CoTModel, x: int, y: int, k: int, seed: int) -> McEstimate:
    """Monte-Carlo estimate of the marginal confidence from k sampled answers."""
    if k < 1:
        raise DomainError(f"need at least one sample, got {k!r}")
    if not 0 <= x < model.problem_count or not 0 <= y < model.answer_count:
        raise DomainError(f"indices ({x}, {y}) outside the model tables")
    answers = _sample_answers(model, x, k, derive_rng(seed, "mc"))
    return McEstimate(value=float((answers == y).mean()), sample_count=k)


def mode_confidence(model: CoTModel, x: int, k: int, seed: int):
    """Most frequent final answer in one k-sample draw and its frequency."""
    if k < 1:
        raise DomainError(f"need at least one sample, got {k!r}")
    if not 0 <= x < model.problem_count:
        raise DomainError(f"problem {x} outside the model tables")
    answers = _sample_answers(model, x, k, derive_rng(seed, "mode"))
    counts = np.bincount(answers, minlength=model.answer_count)
    mode = int(counts.argmax())  # ties resolve to the lowest index
    return mode, McEstimate(value=float(counts[mode] / k), sample_count=k)


@dataclass(frozen=True)
class KeptCandidate:
    """A candidate that survived filtering, with its shared MC estimate.

    The same draw backs both the filter decision and the gradient weight;
    drawing twice would double the inference cost for no extra fidelity.
    """

    example: CotExample
    estimate: McEstimate
    weight: float


def build_dcoa_batch(
    model: CoTModel,
    candidate_stream,
    batch_size: int,
    n_prime: int,
    k: int,
    threshold: float,
    seed: int,
):
    """Assemble a batch by the F(N', estimate) >= threshold rule.

    Candidates are consumed in stream order; each gets one Monte-Carlo
    estimate of its target answer's marginal confidence.  Returns
    (kept, discarded_count) once ``batch_size`` candidates survive, or
    raises StreamExhausted carrying the partial batch.
    """
    if batch_size < 1:
        raise DomainError(f"batch size must be positive, got {batch_size!r}")
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must lie in [0, 1], got {threshold!r}")
    rng = derive_rng(seed, "dcoa-batch")
    kept = []
    discarded = 0
    for example in candidate_stream:
        sub_seed = int(rng.integers(2**63))
        estimate = mc_marginal(model, example.problem, example.answer, k, sub_seed)
        f_val = dco_factor(estimate.value, n_prime)
        if f_val >= threshold:
            kept.append(KeptCandidate(example=example, estimate=estimate, weight=f_val))
            if len(kept) == batch_size:
                return kept, discarded
        else:
            discarded += 1
    raise StreamExhausted(kept, discarded)


@dataclass(frozen=True)
class CotTrainConfig:
    loss: LossSpec  # ce, or dco with the N' of the approximate objective
    learning_rate: float = 0.5
    epochs: int = 8
    batch_size: int = 8
    k_mc: int = 64
    threshold: float = 0.01
    seed: int = 0
    eval_k: int = 64
    hist_edges: tuple = tuple(np.linspace(0.0, 1.0, 21))

    def __post_init__(self):
        if self.loss.kind not in ("ce", "dco"):
            raise DomainError("cot training supports ce or dco loss specs")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise DomainError("learning rate, epochs and batch size must be positive")
        if self.k_mc < 1 or self.eval_k < 1:
            raise DomainError("Monte-Carlo sample counts must be positive")


@dataclass(frozen=True)
class CotEpochSnapshot:
    epoch: int
    mean_mode_confidence: float
    mode_hist: tuple  # (counts, bin edges)
    discarded: int


@dataclass(frozen=True)
class CotTrajectory:
    snapshots: tuple

    @property
    def discard_counts(self):
        return tuple(s.discarded for s in self.snapshots)

    @property
    def mean_mode_confidences(self):
        return tuple(s.mean_mode_confidence for s in self.snapshots)


def _mode_snapshot(policy: CotPolicy, config: CotTrainConfig, epoch: int, discarded: int):
    model = policy.to_model()
    values = np.empty(model.problem_count)
    for x in range(model.problem_count):
        _, est = mode_confidence(
            model, x, config.eval_k, derive_seed(config.seed, "eval", epoch, x)
        )
        values[x] = est.value
    edges = np.asarray(config.hist_edges, dtype=np.float64)
    counts, _ = np.histogram(values, bins=edges)
    return CotEpochSnapshot(
        epoch=epoch,
        mean_mode_confidence=float(values.mean()),
        mode_hist=(counts, edges),
        discarded=discarded,
    )


def train_cot(policy: CotPolicy, data, config: CotTrainConfig):
    """Train on golden triplets; dco specs weigh gradients by F(N', estimate).

    Batches come from build_dcoa_batch over the epoch's shuffled triplets
    (the ce spec skips filtering and weighs everything 1), gradients are
    plain CE on the golden trace and the golden answer given that trace,
    and each epoch snapshots the mode-confidence distribution plus the
    epoch's discard count.
    """
    data = list(data)
    if not data:
        raise DomainError("need at least one training triplet")
    trace_logits = np.asarray(policy.trace_logits, dtype=np.float64).copy()
    answer_logits = np.asarray(policy.answer_logits, dtype=np.float64).copy()
    # Separate streams: the batch-seed draws of the filtering path must not
    # perturb the epoch shuffles, or dco(1) would diverge from ce.
    order_rng = derive_rng(config.seed, "cot-order")
    batch_seed_rng = derive_rng(config.seed, "cot-batch-seeds")
    use_filter = config.loss.kind == "dco"
    snapshots = []
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(len(data))
        epoch_discarded = 0
        position = 0
        while position < len(order):
            working = CotPolicy(trace_logits, answer_logits)
            model = working.to_model()
            remaining = (data[i] for i in order[position:])
            if use_filter:
                try:
                    kept, discarded = build_dcoa_batch(
                        model,
                        remaining,
                        config.batch_size,
                        config.loss.n,
                        config.k_mc,
                        config.threshold,
                        int(batch_seed_rng.integers(2**63)),
                    )
                except StreamExhausted as exhausted:
                    kept = exhausted.kept
                    discarded = exhausted.discarded_count
                epoch_discarded += discarded
                position += len(kept) + discarded
            else:
                batch = [data[i] for i in order[position : position + config.batch_size]]
                kept = [
                    KeptCandidate(
                        example=ex,
                        estimate=McEstimate(value=0.0, sample_count=1),
                        weight=1.0,
                    )
                    for ex in batch
                ]
                position += len(kept)
            if not kept:
                continue
            trace_probs = _softmax(trace_logits)
            answer_probs = _softmax(answer_logits)
            trace_grad = np.zeros_like(trace_logits)
            answer_grad = np.zeros_like(answer_logits)
            for cand in kept:
                ex, w = cand.example, cand.weight
                trace_grad[ex.problem] += w * trace_probs[ex.problem]
                trace_grad[ex.problem, ex.trace] -= w
                answer_grad[ex.problem, ex.trace] += w * answer_probs[ex.problem, ex.trace]
                answer_grad[ex.problem, ex.trace, ex.answer] -= w
            trace_logits -= config.learning_rate * trace_grad / len(kept)
            answer_logits -= config.learning_rate * answer_grad / len(kept)
            if not (
                np.all(np.isfinite(trace_logits)) and np.all(np.isfinite(answer_logits))
            ):
                raise TrainingDiverged(f"non-finite cot logits at epoch {epoch}")
        snapshots.append(
            _mode_snapshot(CotPolicy(trace_logits, answer_logits), config, epoch, epoch_discarded)
        )
    return CotPolicy(trace_logits, answer_logits), CotTrajectory(tuple(snapshots))

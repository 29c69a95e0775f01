"""Tabular softmax policies trained under CE / coverage / focal losses.

Each problem owns an independent row of logits over R answers, so every
quantity the experiments track -- coverage at any budget, greedy
confidence, entropy, calibration -- is exact rather than sampled.  The
gradient of every supported loss is the CE gradient (softmax - onehot)
scaled by a per-example weight from LossSpec.gradient_weight, which makes
ce, dco(1) and focal(0) runs bit-for-bit identical under a shared seed.

Unlearnable problems are modeled by label noise: a configurable fraction
of problems never see their correct answer in the training stream; every
pair sampled from such a problem targets the problem's fixed decoy answer
(a systematic misconception).  That is what drives the confident-and-wrong
dynamics large-budget coverage is sensitive to.
"""

from dataclasses import dataclass, field

import numpy as np

from .coverage import CoverageCurve, coverage_single, coverage_single_dp
from .errors import DomainError, InfiniteLossError, TrainingDiverged
from .losses import FilterPolicy, LossSpec, dco_factor
from .seeding import derive_rng
from .tasks import TaskSet

__all__ = [
    "PolicyTable",
    "TrainConfig",
    "EpochSnapshot",
    "TrainingTrajectory",
    "EntropyReport",
    "noisy_problem_decoys",
    "train",
    "grpo_step",
    "eval_pass_at_n",
    "greedy_confidences",
    "greedy_confidence_histogram",
    "calibration_table",
    "entropy_report",
    "directional_derivative",
    "pareto_frontier",
]

# A batch draw gives up after this many candidates per slot; an empty batch
# then just skips the step (everything was filtered away).
_MAX_DRAW_FACTOR = 50


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Per-problem answer logits; rows are independent softmax policies."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[1] < 2:
            raise DomainError("policy table must be (problems x answers), R >= 2")
        if not np.all(np.isfinite(logits)):
            raise DomainError("policy logits must be finite")
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, problem_count: int, answer_count: int) -> "PolicyTable":
        return cls(np.zeros((problem_count, answer_count)))

    def probs(self) -> np.ndarray:
        return _softmax_rows(self.logits)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``label_noise`` is the fraction of problems treated as unlearnable:
    every training pair sampled from such a problem targets the problem's
    fixed decoy answer instead of a correct one.  ``noisy_problems``
    overrides the random marking with explicit problem indices.
    ``steps_per_epoch`` defaults to ceil(problems/batch_size).
    """

    loss: LossSpec
    learning_rate: float = 0.5
    epochs: int = 4
    batch_size: int = 16
    filter: FilterPolicy = None
    seed: int = 0
    label_noise: float = 0.3
    noisy_problems: tuple = None
    eval_ns: tuple = (1, 16, 256)
    steps_per_epoch: int = None
    hist_edges: tuple = tuple(np.linspace(0.0, 1.0, 21))
    calibration_top_k: int = 8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise DomainError("learning rate, epochs and batch size must be positive")
        if not 0.0 <= self.label_noise <= 1.0:
            raise DomainError(f"label_noise must lie in [0, 1], got {self.label_noise!r}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise DomainError("steps_per_epoch must be positive when given")


@dataclass(frozen=True)
class EpochSnapshot:
    epoch: int
    coverage: CoverageCurve
    mean_greedy_confidence: float
    greedy_hist: tuple  # (counts, bin edges)
    mean_entropy: float
    entropy_sem: float
    calibration: tuple


@dataclass(frozen=True)
class TrainingTrajectory:
    """One snapshot per completed epoch."""

    snapshots: tuple

    def rows(self):
        """(epoch, N, coverage, mean_greedy_conf, mean_entropy) tuples."""
        out = []
        for snap in self.snapshots:
            for n, cov in snap.coverage.entries.items():
                out.append(
                    (snap.epoch, n, cov, snap.mean_greedy_confidence, snap.mean_entropy)
                )
        return out


@dataclass(frozen=True)
class EntropyReport:
    per_problem: np.ndarray
    mean: float
    sem: float


def _weighted_pick(rng, cumulative) -> int:
    return int(np.searchsorted(cumulative, rng.random(), side="right"))


def _draw_pair(rng, tasks: TaskSet, cum_weights, decoys):
    """One (problem, target) training pair honoring the label-noise model."""
    problem = _weighted_pick(rng, cum_weights)
    if decoys[problem] >= 0:
        target = int(decoys[problem])
    else:
        correct = tasks.correct[problem]
        target = correct[int(rng.integers(len(correct)))]
    return problem, target


def noisy_problem_decoys(tasks: TaskSet, config: "TrainConfig") -> np.ndarray:
    """Per-problem decoy targets; -1 marks clean problems.

    The noisy subset comes from ``config.noisy_problems`` when given,
    otherwise round(label_noise * problems) indices are drawn from the
    run's label-noise stream.  Each noisy problem gets one fixed wrong
    answer as its training target.
    """
    rng = derive_rng(config.seed, "label-noise")
    n_problems = tasks.problem_count
    if config.noisy_problems is not None:
        marked = [int(i) for i in config.noisy_problems]
        if any(not 0 <= i < n_problems for i in marked):
            raise DomainError("noisy_problems indices outside the task set")
    else:
        n_noisy = round(config.label_noise * n_problems)
        marked = rng.permutation(n_problems)[:n_noisy].tolist()
    decoys = np.full(n_problems, -1, dtype=np.int64)
    for i in sorted(marked):
        wrong = [a for a in range(tasks.answer_count) if a not in tasks.correct[i]]
        decoys[i] = wrong[int(rng.integers(len(wrong)))]
    return decoys


def _snapshot(epoch, policy, tasks, config) -> EpochSnapshot:
    greedy = greedy_confidences(policy, tasks)
    counts, edges = greedy_confidence_histogram(policy, tasks, config.hist_edges)
    ent = entropy_report(policy, tasks)
    top_k = min(config.calibration_top_k, tasks.answer_count)
    return EpochSnapshot(
        epoch=epoch,
        coverage=eval_pass_at_n(policy, tasks, config.eval_ns),
        mean_greedy_confidence=float(greedy.mean()),
        greedy_hist=(counts, edges),
        mean_entropy=ent.mean,
        entropy_sem=ent.sem,
        calibration=tuple(calibration_table(policy, tasks, top_k)),
    )


def train(policy: PolicyTable, tasks: TaskSet, config: TrainConfig):
    """Plain gradient descent on weighted CE gradients; returns (policy, trajectory).

    Batches are assembled from the current parameters: candidates whose F
    falls below the filter threshold are dropped and, when the policy asks
    for replacement, substituted by fresh draws.  Losses outside the dco
    family never filter.
    """
    if policy.logits.shape[0] != tasks.problem_count:
        raise DomainError("policy rows and task problems disagree")
    if policy.logits.shape[1] != tasks.answer_count:
        raise DomainError("policy columns and task answers disagree")
    if config.loss.kind == "grpo":
        raise DomainError("grpo training runs through grpo_step, not train()")
    logits = policy.logits.copy()
    rng = derive_rng(config.seed, "train")
    decoys = noisy_problem_decoys(tasks, config)
    weights = tasks.sampling_weight / tasks.sampling_weight.sum()
    cum_weights = np.cumsum(weights)
    steps = config.steps_per_epoch or -(-tasks.problem_count // config.batch_size)
    filtering = config.loss.is_dco_family() and config.filter is not None
    snapshots = []
    for epoch in range(1, config.epochs + 1):
        for _ in range(steps):
            batch = []
            draws = 0
            max_draws = _MAX_DRAW_FACTOR * config.batch_size
            while len(batch) < config.batch_size and draws < max_draws:
                draws += 1
                problem, target = _draw_pair(rng, tasks, cum_weights, decoys)
                row = logits[problem]
                row_probs = np.exp(row - row.max())
                row_probs /= row_probs.sum()
                if filtering:
                    f_val = dco_factor(row_probs[target], config.loss.n)
                    if f_val < config.filter.threshold_eps:
                        if config.filter.replacement:
                            continue
                        break
                batch.append((problem, target, row_probs))
            if not batch:
                continue
            grad = np.zeros_like(logits)
            for problem, target, row_probs in batch:
                w = config.loss.gradient_weight(row_probs[target])
                g_row = w * row_probs
                grad[problem] += g_row
                grad[problem, target] -= w
            logits -= config.learning_rate * grad / len(batch)
            if not np.all(np.isfinite(logits)):
                raise TrainingDiverged(
                    f"non-finite logits at epoch {epoch} with {config.loss.kind}"
                )
        snapshots.append(_snapshot(epoch, PolicyTable(logits), tasks, config))
    return PolicyTable(logits), TrainingTrajectory(tuple(snapshots))


def grpo_step(
    policy: PolicyTable,
    tasks: TaskSet,
    group_size: int,
    learning_rate: float,
    seed: int,
) -> PolicyTable:
    """One group-relative policy-gradient sweep over all problems.

    Per problem: sample a group of answers, reward membership in the
    correct set, baseline by the group mean, and ascend the mean of
    advantage-weighted score gradients.  Groups with all-equal rewards
    carry no signal and are skipped.
    """
    if group_size < 2:
        raise DomainError(f"group size must be at least 2, got {group_size!r}")
    if policy.logits.shape[0] != tasks.problem_count:
        raise DomainError("policy rows and task problems disagree")
    rng = derive_rng(seed, "grpo")
    logits = policy.logits.copy()
    probs = _softmax_rows(logits)
    grad = np.zeros_like(logits)
    for i in range(tasks.problem_count):
        row = probs[i]
        cum = np.cumsum(row)
        draws = rng.random(group_size)
        answers = np.minimum(
            np.searchsorted(cum, draws, side="right"), tasks.answer_count - 1
        )
        rewards = tasks.correct_mask[i, answers].astype(np.float64)
        if rewards.min() == rewards.max():
            continue
        advantages = rewards - rewards.mean()
        for adv, a in zip(advantages, answers):
            grad[i] -= adv * row
            grad[i, a] += adv
    logits += learning_rate * grad / group_size
    if not np.all(np.isfinite(logits)):
        raise TrainingDiverged("non-finite logits after grpo step")
    return PolicyTable(logits)


def eval_pass_at_n(policy: PolicyTable, tasks: TaskSet, ns) -> CoverageCurve:
    """Exact dataset coverage: per-problem correct mass through the closed form."""
    probs = policy.probs()
    q = np.minimum((probs * tasks.correct_mask).sum(axis=1), 1.0)
    entries = {}
    for n in ns:
        entries[int(n)] = float(
            np.mean([coverage_single(float(qi), int(n)) for qi in q])
        )
    return CoverageCurve(entries)


def greedy_confidences(policy: PolicyTable, tasks: TaskSet) -> np.ndarray:
    """Probability of each problem's greedy answer (argmax, ties to lowest index)."""
    probs = policy.probs()
    greedy = probs.argmax(axis=1)
    return probs[np.arange(probs.shape[0]), greedy]


def greedy_confidence_histogram(policy: PolicyTable, tasks: TaskSet, bin_edges):
    """Histogram of greedy confidences; bins are closed on the left."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    counts, _ = np.histogram(greedy_confidences(policy, tasks), bins=edges)
    return counts, edges


def calibration_table(policy: PolicyTable, tasks: TaskSet, top_k: int) -> np.ndarray:
    """Accuracy at each confidence rank: rank answers per problem, then
    report the fraction of problems whose rank-i answer is correct."""
    if top_k < 1 or top_k > tasks.answer_count:
        raise DomainError(f"top_k must lie in [1, {tasks.answer_count}], got {top_k!r}")
    probs = policy.probs()
    order = np.argsort(-probs, axis=1, kind="stable")
    acc = np.empty(top_k)
    rows = np.arange(probs.shape[0])
    for rank in range(top_k):
        acc[rank] = tasks.correct_mask[rows, order[:, rank]].mean()
    return acc


def entropy_report(policy: PolicyTable, tasks: TaskSet) -> EntropyReport:
    """Exact per-problem Shannon entropy (natural log) with mean and SEM."""
    probs = policy.probs()
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    h = -terms.sum(axis=1)
    sem = float(h.std(ddof=1) / np.sqrt(h.size)) if h.size > 1 else 0.0
    return EntropyReport(per_problem=h, mean=float(h.mean()), sem=sem)


def directional_derivative(
    policy: PolicyTable,
    probe_batch,
    tasks_test: TaskSet,
    n: int,
    test_indices=None,
) -> float:
    """Derivative of the pass@n test loss along the CE descent direction.

    ``probe_batch`` is a sequence of (problem, target) pairs; the probe
    direction is g = -sum of their CE gradients.  The test loss is
    sum over test problems of -log coverage of the true correct mass.
    Negative return value means a step along g helps the test loss.
    Probe problems absent from the test set contribute exactly zero
    because logit rows are independent.
    """
    if policy.logits.shape[0] != tasks_test.problem_count:
        raise DomainError("policy rows and test task problems disagree")
    probs = policy.probs()
    g = {}
    for problem, target in probe_batch:
        row = g.setdefault(problem, np.zeros(tasks_test.answer_count))
        row -= probs[problem]
        row[target] += 1.0
    if test_indices is None:
        test_indices = range(tasks_test.problem_count)
    total = 0.0
    for j in test_indices:
        if j not in g:
            continue
        qj = float(np.minimum((probs[j] * tasks_test.correct_mask[j]).sum(), 1.0))
        cov = coverage_single(qj, n)
        if cov == 0.0:
            raise InfiniteLossError(f"test problem {j} has zero coverage")
        dl_dq = -coverage_single_dp(qj, n) / cov
        dq_dlogits = probs[j] * (tasks_test.correct_mask[j].astype(np.float64) - qj)
        total += dl_dq * float(g[j] @ dq_dlogits)
    return total


def pareto_frontier(curves) -> dict:
    """Pointwise max over training budgets: budget -> (best N', value).

    Ties go to the smaller N'.  All curves must share the same N grid.
    """
    if not curves:
        raise DomainError("need at least one coverage curve")
    items = sorted(curves.items())
    budgets = items[0][1].budgets
    for nprime, curve in items:
        if curve.budgets != budgets:
            raise DomainError(f"curve for N'={nprime} is on a different N grid")
    frontier = {}
    for n in budgets:
        best_nprime, best_value = None, -1.0
        for nprime, curve in items:
            if curve[n] > best_value:
                best_nprime, best_value = nprime, curve[n]
        frontier[n] = (best_nprime, best_value)
    return frontier

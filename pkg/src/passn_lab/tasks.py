"""Synthetic answer-selection task sets for the tabular trainer.

A task set is a batch of problems sharing one answer alphabet of size R;
each problem has a nonempty set of correct answers, a difficulty level,
and a sampling weight.  Lower (easier) levels get larger correct sets and
larger weights, so easy problems are both more solvable and visited more
often per epoch.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .seeding import derive_rng

__all__ = ["TaskSet", "generate_tasks", "single_answer_tasks", "corrupt_labels"]


@dataclass(frozen=True, eq=False)
class TaskSet:
    """Problems over a shared answer alphabet of size ``answer_count``."""

    answer_count: int
    correct: tuple  # per problem, sorted tuple of correct answer indices
    difficulty: np.ndarray
    sampling_weight: np.ndarray

    def __post_init__(self):
        if self.answer_count < 2:
            raise DomainError("need at least two answers per problem")
        correct = tuple(tuple(sorted(set(int(a) for a in c))) for c in self.correct)
        if not correct:
            raise DomainError("task set must contain at least one problem")
        for c in correct:
            if not c:
                raise DomainError("every problem needs a nonempty correct set")
            if c[0] < 0 or c[-1] >= self.answer_count:
                raise DomainError(f"correct set {c!r} outside of answer range")
        difficulty = np.asarray(self.difficulty, dtype=np.int64)
        weight = np.asarray(self.sampling_weight, dtype=np.float64)
        if not (len(correct) == difficulty.size == weight.size):
            raise DomainError("per-problem field lengths disagree")
        if np.any(weight <= 0.0):
            raise DomainError("sampling weights must be positive")
        object.__setattr__(self, "correct", correct)
        object.__setattr__(self, "difficulty", difficulty)
        object.__setattr__(self, "sampling_weight", weight)
        mask = np.zeros((len(correct), self.answer_count), dtype=bool)
        for i, c in enumerate(correct):
            mask[i, list(c)] = True
        object.__setattr__(self, "correct_mask", mask)

    @property
    def problem_count(self) -> int:
        return len(self.correct)

    def to_json(self) -> str:
        payload = {
            "answer_count": self.answer_count,
            "problems": [
                {
                    "correct": list(c),
                    "difficulty": int(d),
                    "weight": float(w),
                }
                for c, d, w in zip(self.correct, self.difficulty, self.sampling_weight)
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TaskSet":
        payload = json.loads(text)
        problems = payload["problems"]
        return cls(
            answer_count=int(payload["answer_count"]),
            correct=tuple(tuple(p["correct"]) for p in problems),
            difficulty=np.array([p["difficulty"] for p in problems], dtype=np.int64),
            sampling_weight=np.array([p["weight"] for p in problems], dtype=np.float64),
        )


def _level_counts(problem_count: int, proportions) -> list:
    """Integer counts per level matching the proportions exactly.

    Largest-remainder apportionment keeps the histogram equal to the
    requested proportions whenever they are exactly realizable.
    """
    weights = np.asarray(proportions, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0 or np.any(weights < 0) or weights.sum() == 0:
        raise DomainError(f"bad difficulty proportions {proportions!r}")
    shares = weights / weights.sum() * problem_count
    counts = np.floor(shares).astype(int)
    remainder = problem_count - counts.sum()
    order = np.argsort(-(shares - counts), kind="stable")
    for i in range(remainder):
        counts[order[i]] += 1
    return counts.tolist()


def generate_tasks(problem_count: int, answer_count: int, difficulty_levels, seed: int) -> TaskSet:
    """Deterministic synthetic task set.

    ``difficulty_levels`` is either a level count (equal proportions) or a
    sequence of per-level proportions.  Level 1 is easiest: its problems
    carry the largest correct sets and the largest sampling weights, so
    they are seen most often during an epoch.
    """
    if problem_count < 1 or answer_count < 2:
        raise DomainError("need a positive problem count and at least two answers")
    if isinstance(difficulty_levels, int):
        if difficulty_levels < 1:
            raise DomainError("need at least one difficulty level")
        proportions = [1.0] * difficulty_levels
    else:
        proportions = list(difficulty_levels)
    counts = _level_counts(problem_count, proportions)
    rng = derive_rng(seed, "tasks")
    levels = np.repeat(np.arange(1, len(counts) + 1), counts)
    levels = levels[rng.permutation(problem_count)]
    correct = []
    weight = np.empty(problem_count)
    for i in range(problem_count):
        level = int(levels[i])
        size = max(1, round(answer_count * 0.3 / 2 ** (level - 1)))
        size = min(size, answer_count - 1)  # keep at least one wrong answer
        picks = rng.choice(answer_count, size=size, replace=False)
        correct.append(tuple(sorted(int(a) for a in picks)))
        weight[i] = 2.0 ** (len(counts) - level)
    return TaskSet(
        answer_count=answer_count,
        correct=tuple(correct),
        difficulty=levels,
        sampling_weight=weight,
    )


def single_answer_tasks(
    problem_count: int,
    answer_count: int,
    seed: int,
    difficulty=None,
    sampling_weight=None,
) -> TaskSet:
    """Task set with exactly one correct answer per problem.

    The natural setting for confidence-scale experiments: the initial
    uniform policy starts at confidence 1/answer_count on the correct
    answer.  Difficulty and weights default to a single uniform level.
    """
    if problem_count < 1 or answer_count < 2:
        raise DomainError("need a positive problem count and at least two answers")
    rng = derive_rng(seed, "single-answer-tasks")
    correct = tuple((int(rng.integers(answer_count)),) for _ in range(problem_count))
    if difficulty is None:
        difficulty = np.ones(problem_count, dtype=np.int64)
    if sampling_weight is None:
        sampling_weight = np.ones(problem_count)
    return TaskSet(
        answer_count=answer_count,
        correct=correct,
        difficulty=np.asarray(difficulty, dtype=np.int64),
        sampling_weight=np.asarray(sampling_weight, dtype=np.float64),
    )


def corrupt_labels(tasks: TaskSet, fraction: float, seed: int) -> TaskSet:
    """Training-view task set with a fraction of correct sets replaced by decoys.

    Each corrupted problem gets a same-size set of wrong answers, modeling
    a persistently wrong supervision signal; evaluation should keep using
    the original task set.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction!r}")
    rng = derive_rng(seed, "corrupt")
    n_bad = round(fraction * tasks.problem_count)
    bad = set(rng.permutation(tasks.problem_count)[:n_bad].tolist())
    correct = []
    for i, c in enumerate(tasks.correct):
        if i in bad:
            wrong = [a for a in range(tasks.answer_count) if a not in c]
            size = min(len(c), len(wrong))
            picks = rng.choice(len(wrong), size=size, replace=False)
            correct.append(tuple(sorted(wrong[j] for j in picks)))
        else:
            correct.append(c)
    return TaskSet(
        answer_count=tasks.answer_count,
        correct=tuple(correct),
        difficulty=tasks.difficulty.copy(),
        sampling_weight=tasks.sampling_weight.copy(),
    )

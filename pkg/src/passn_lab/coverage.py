"""Exact pass@N coverage: closed forms, an empirical estimator, coverage loss.

For a single problem with success probability p, the chance that at least
one of N independent samples succeeds is 1 - (1-p)^N.  All closed forms go
through log1p/expm1 because budgets run into the thousands, where the naive
power underflows: (1-p)^N is computed as exp(N*log1p(-p)) and the coverage
as -expm1(N*log1p(-p)).
"""

import math
from dataclasses import dataclass, field

from .errors import DomainError, InfiniteLossError

__all__ = [
    "CoverageCurve",
    "SampleTally",
    "coverage_single",
    "coverage_single_dp",
    "coverage_dataset",
    "coverage_from_pass1",
    "pass_at_n_estimate",
    "neg_log_coverage_loss",
]


def _check_prob(p: float, name: str = "p") -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def _check_budget(n: int) -> int:
    if n != int(n) or int(n) < 1:
        raise DomainError(f"sample budget must be a positive integer, got {n!r}")
    return int(n)


def coverage_single(p: float, n: int) -> float:
    """Probability that at least one of ``n`` samples succeeds: 1-(1-p)^n."""
    p = _check_prob(p)
    n = _check_budget(n)
    if n == 1:
        return p
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p))


def coverage_single_dp(p: float, n: int) -> float:
    """Derivative of coverage_single with respect to p: n*(1-p)^(n-1)."""
    p = _check_prob(p)
    n = _check_budget(n)
    if n == 1:
        return 1.0
    if p == 1.0:
        return 0.0
    return n * math.exp((n - 1) * math.log1p(-p))


def coverage_dataset(per_problem_p, n: int) -> float:
    """Mean per-problem coverage over a dataset of success probabilities."""
    ps = [_check_prob(p) for p in per_problem_p]
    if not ps:
        raise DomainError("coverage of an empty dataset is undefined")
    n = _check_budget(n)
    return sum(coverage_single(p, n) for p in ps) / len(ps)


def coverage_from_pass1(c1: float, n: int) -> float:
    """Single-problem coverage at budget ``n`` given the coverage at n=1.

    The transform 1-(1-c1)^n is a strictly increasing bijection on [0, 1]
    for every n, so single-problem policies rank identically under every
    budget.
    """
    c1 = _check_prob(c1, "c1")
    return coverage_single(c1, n)


@dataclass(frozen=True)
class SampleTally:
    """Per-problem sampling outcome: ``c`` correct out of ``n`` drawn."""

    n: int
    c: int

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise DomainError(f"tally needs a positive sample count, got {self.n!r}")
        if not 0 <= self.c <= self.n or int(self.c) != self.c:
            raise DomainError(f"correct count must lie in [0, {self.n}], got {self.c!r}")


def pass_at_n_estimate(tally: SampleTally, n: int) -> float:
    """Unbiased pass@n estimate 1 - C(n_tot-c, n)/C(n_tot, n).

    The binomial ratio is evaluated as the telescoping product
    prod_{i<n} (n_tot-c-i)/(n_tot-i) in log space; factorials would
    overflow at sample counts in the thousands.
    """
    n = _check_budget(n)
    if n > tally.n:
        raise DomainError(f"cannot estimate pass@{n} from {tally.n} samples")
    if tally.c == 0:
        return 0.0
    failures = tally.n - tally.c
    if failures < n:
        return 1.0
    log_ratio = 0.0
    for i in range(n):
        log_ratio += math.log(failures - i) - math.log(tally.n - i)
    return 1.0 - math.exp(log_ratio)


def neg_log_coverage_loss(per_problem_p, n: int) -> float:
    """Sum over problems of -log(coverage_single(p, n)).

    Raises InfiniteLossError for any zero-coverage problem; the loss is
    genuinely +inf there, which is different from overflow.
    """
    ps = [_check_prob(p) for p in per_problem_p]
    if not ps:
        raise DomainError("loss over an empty dataset is undefined")
    n = _check_budget(n)
    total = 0.0
    for p in ps:
        cov = coverage_single(p, n)
        if cov == 0.0:
            raise InfiniteLossError(f"zero coverage for success probability {p}")
        total += -math.log(cov)
    return total


@dataclass(frozen=True)
class CoverageCurve:
    """Map from sample budget N to coverage, ordered by N."""

    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for n, value in self.entries.items():
            n = _check_budget(n)
            value = float(value)
            if not (0.0 <= value <= 1.0):
                raise DomainError(f"coverage at N={n} must lie in [0, 1], got {value!r}")
            cleaned[n] = value
        object.__setattr__(self, "entries", dict(sorted(cleaned.items())))

    @property
    def budgets(self) -> tuple:
        return tuple(self.entries)

    @property
    def values(self) -> tuple:
        return tuple(self.entries.values())

    def __getitem__(self, n: int) -> float:
        return self.entries[n]

    def is_monotone(self) -> bool:
        vals = self.values
        return all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

"""Optimal confidence allocation for pass@N on a calibrated accuracy profile.

Given ranked per-answer correctness probabilities p_1 >= ... >= p_R > 0,
the allocation maximizing expected coverage 1 - sum_i p_i (1 - phat_i)^N
has water-filling structure: on its support of size r,

    phat_i = 1 - (r-1) p_i^(-a) / sum_{t<=r} p_t^(-a),    a = 1/(N-1),

with zeros beyond r.  The solver scans support sizes and keeps the largest
feasible one; a brute-force grid oracle (exhaustive simplex scan plus
pairwise exchange refinement) double-checks it.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .coverage import coverage_single
from .errors import DomainError

__all__ = [
    "AccuracyProfile",
    "ConfidenceProfile",
    "OrderAlignment",
    "expected_coverage",
    "optimal_confidences",
    "brute_force_optimal",
    "check_order_alignment",
]

_FEASIBLE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class AccuracyProfile:
    """Ranked true-correctness probabilities; sum <= 1, remainder is tail mass."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("accuracy profile must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
            raise DomainError("accuracies must be finite and strictly positive")
        if np.any(np.diff(p) > 1e-12):
            raise DomainError("accuracies must be non-increasing")
        if p.sum() > 1.0 + 1e-10:
            raise DomainError(f"accuracies sum to {p.sum()!r} > 1")
        object.__setattr__(self, "p", p)

    def __len__(self):
        return self.p.size

    @property
    def tail_mass(self) -> float:
        return max(0.0, 1.0 - float(self.p.sum()))


@dataclass(frozen=True, eq=False)
class ConfidenceProfile:
    """A point on the probability simplex over ranked answers."""

    phat: np.ndarray

    def __post_init__(self):
        phat = np.asarray(self.phat, dtype=np.float64)
        if phat.ndim != 1 or phat.size == 0:
            raise DomainError("confidence profile must be a nonempty 1-d sequence")
        if np.any(phat < -1e-12) or np.any(phat > 1.0 + 1e-12):
            raise DomainError("confidences must lie in [0, 1]")
        if abs(phat.sum() - 1.0) > 1e-10:
            raise DomainError(f"confidences sum to {phat.sum()!r}, not 1")
        object.__setattr__(self, "phat", np.clip(phat, 0.0, 1.0))

    def __len__(self):
        return self.phat.size

    @property
    def max_confidence(self) -> float:
        return float(self.phat.max())


def expected_coverage(acc: AccuracyProfile, conf: ConfidenceProfile, n: int) -> float:
    """Expected chance of a correct answer in n passes: sum_i p_i C(phat_i, n)."""
    if len(acc) != len(conf):
        raise DomainError(
            f"profile lengths differ: {len(acc)} accuracies vs {len(conf)} confidences"
        )
    return float(
        sum(p * coverage_single(q, n) for p, q in zip(acc.p, conf.phat))
    )


def optimal_confidences(acc: AccuracyProfile, n: int) -> ConfidenceProfile:
    """Coverage-maximizing allocation; one-hot at n=1, water-filling beyond."""
    if n != int(n) or n < 1:
        raise DomainError(f"N must be a positive integer, got {n!r}")
    n = int(n)
    big_r = len(acc)
    if n == 1:
        phat = np.zeros(big_r)
        phat[0] = 1.0
        return ConfidenceProfile(phat)
    alpha = 1.0 / (n - 1)
    # p^(-alpha) normalized by the top entry so the weights start at 1 and
    # cannot overflow for sane profiles.
    logp = np.log(acc.p)
    w = np.exp(-alpha * (logp - logp[0]))
    prefix = np.cumsum(w)
    best_r = 1
    for r in range(1, big_r + 1):
        if (r - 1) * w[r - 1] < prefix[r - 1] * (1.0 - _FEASIBLE_TOL):
            best_r = r
    phat = np.zeros(big_r)
    scale = prefix[best_r - 1]
    phat[:best_r] = 1.0 - (best_r - 1) * w[:best_r] / scale
    return ConfidenceProfile(np.clip(phat, 0.0, None))


def _pairwise_refine(p, x, n, max_sweeps=200, tol=1e-14):
    """Cyclic pairwise exchange: exact 1-d minimizer for each budget split."""
    big_r = p.size
    alpha = 1.0 / (n - 1) if n > 1 else None
    for _ in range(max_sweeps):
        moved = 0.0
        for i in range(big_r):
            for j in range(i + 1, big_r):
                budget = x[i] + x[j]
                if budget <= 0.0:
                    continue
                if n == 1:
                    xi = budget if p[i] >= p[j] else 0.0
                else:
                    c = math.exp(alpha * (math.log(p[j]) - math.log(p[i])))
                    xi = (1.0 - c * (1.0 - budget)) / (1.0 + c)
                    xi = min(max(xi, 0.0), budget)
                delta = abs(xi - x[i])
                if delta > 0.0:
                    x[i] = xi
                    x[j] = budget - xi
                    moved = max(moved, delta)
        if moved < tol:
            break
    return x


def brute_force_optimal(
    acc: AccuracyProfile, n: int, resolution: int
) -> ConfidenceProfile:
    """Independent oracle: exhaustive simplex-grid scan plus local refinement.

    Guarded to R <= 5 and resolution <= 200; the scan visits every integer
    composition of `resolution`, then pairwise exchanges polish the best
    grid point to stationarity.
    """
    if n != int(n) or n < 1:
        raise DomainError(f"N must be a positive integer, got {n!r}")
    n = int(n)
    big_r = len(acc)
    if big_r > 5:
        raise DomainError(f"brute force is guarded to R <= 5, got R={big_r}")
    if resolution != int(resolution) or not 1 <= int(resolution) <= 200:
        raise DomainError(f"resolution must lie in [1, 200], got {resolution!r}")
    resolution = int(resolution)
    if n == 1:
        phat = np.zeros(big_r)
        phat[0] = 1.0
        return ConfidenceProfile(phat)
    grid = np.arange(resolution + 1, dtype=np.float64) / resolution
    pow_table = (1.0 - grid) ** n
    best_m = kernels.simplex_grid_scan(acc.p, pow_table, resolution)
    x = best_m.astype(np.float64) / resolution
    x = _pairwise_refine(acc.p, x, n)
    total = x.sum()
    if total > 0:
        x = x / total
    return ConfidenceProfile(x)


@dataclass(frozen=True)
class OrderAlignment:
    """Result of the calibration-order check.

    ``witness`` is the first adjacent rank pair (1-based) where a strictly
    lower accuracy got strictly more confidence; ``swap_gain`` is by how
    much swapping those two confidences raises expected coverage (it can
    never lower it, which is the exchange argument behind the check).
    """

    aligned: bool
    witness: tuple = None
    swap_gain: float = None


def check_order_alignment(
    acc: AccuracyProfile, conf: ConfidenceProfile, n: int = 2
) -> OrderAlignment:
    """True iff confidences are non-increasing wherever accuracies strictly drop."""
    if len(acc) != len(conf):
        raise DomainError(
            f"profile lengths differ: {len(acc)} accuracies vs {len(conf)} confidences"
        )
    p, q = acc.p, conf.phat
    for i in range(len(acc) - 1):
        if p[i] > p[i + 1] and q[i] < q[i + 1]:
            swapped = q.copy()
            swapped[i], swapped[i + 1] = q[i + 1], q[i]
            gain = expected_coverage(acc, ConfidenceProfile(swapped), n) - (
                expected_coverage(acc, conf, n)
            )
            return OrderAlignment(False, witness=(i + 1, i + 2), swap_gain=gain)
    return OrderAlignment(True)

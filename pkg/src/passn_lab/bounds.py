"""Bounds on the max confidence of coverage-optimal policies.

Upper bound: among profiles with max accuracy p1 and total mass 1-eps over
the top k answers, the optimal allocation's top confidence is largest
either at the near-uniform corner ("case k", closed form) or at a boundary
configuration where exactly j entries stay positive ("case j", found by
root-finding the stationarity system).  Lower bound: with second accuracy
p2 known, spreading the remaining mass as widely as possible still forces
a floor on the top confidence.  Both bounds decrease in N and approach 1
as N -> 1+: small budgets demand exploitation, large budgets exploration.
"""

import math
from dataclasses import dataclass

from .errors import DomainError, InfeasibleBound

__all__ = [
    "BoundQuery",
    "BoundResult",
    "case_k_applies",
    "upper_bound",
    "lower_bound_integer_s",
    "lower_bound_closed",
    "bounds_sweep_rows",
]

_BISECT_ITERS = 200
# The contract asks for 1e-12 on q; iterating to machine precision within
# the 200-iteration cap costs nothing and keeps witness residuals tiny.
_BISECT_TOL = 1e-15
_SCAN_POINTS = 10_000


@dataclass(frozen=True)
class BoundQuery:
    """Upper-bound query: max accuracy p1, tail mass eps, support k, budget N."""

    p1: float
    eps: float
    k: int
    n: int

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise DomainError(f"p1 must lie in (0, 1), got {self.p1!r}")
        if not 0.0 < self.eps < 1.0 - self.p1:
            raise DomainError(
                f"eps must lie in (0, 1-p1) = (0, {1.0 - self.p1}), got {self.eps!r}"
            )
        if self.k != int(self.k) or self.k < 2:
            raise DomainError(f"k must be an integer >= 2, got {self.k!r}")
        if self.n != int(self.n) or self.n < 2:
            raise DomainError(f"N must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "n", int(self.n))
        if self.p1 < (1.0 - self.eps) / self.k:
            raise DomainError(
                "no admissible profile: p1 must be at least (1-eps)/k = "
                f"{(1.0 - self.eps) / self.k}"
            )


@dataclass(frozen=True)
class BoundResult:
    """Upper-bound value with the case that produced it.

    For case "j" the result carries the support index j (confidence is
    then pinned between 1/j and 1/(j-1)) and the witness (q, p) solving
    the stationarity system.
    """

    value: float
    case: str
    j: int = None
    witness: tuple = None


def _ratio_power(j: int, n: int) -> float:
    """((j-2)/(j-1))^(n-1); defined as 0 at j=2 for every n > 1."""
    if j == 2:
        return 0.0
    return math.exp((n - 1) * math.log((j - 2) / (j - 1)))


def case_k_applies(query: BoundQuery) -> bool:
    """Whether p1 falls in the near-uniform range where all k entries stay positive."""
    lo = (1.0 - query.eps) / query.k
    hi = (1.0 - query.eps) / (query.k - 1 + _ratio_power(query.k, query.n))
    return lo <= query.p1 < hi


def _neg_pow(x: float, alpha: float) -> float:
    """x^(-alpha) via logs; x must be positive."""
    return math.exp(-alpha * math.log(x))


def _solve_case_j(query: BoundQuery, j: int):
    """Solve the case-j stationarity system for (q, p), or None if infeasible.

    q is the j-th accuracy, p the common value of the k-j entries below it;
    the residual g(q) = (j-1)(p^(-a) - p1^(-a)) - q^(-a) is increasing in q
    on the feasible interval, so a sign change brackets the root.  If the
    endpoint signs do not bracket (the monotonicity check), a dense scan
    looks for an interior bracket before giving up.
    """
    p1, eps, k, n = query.p1, query.eps, query.k, query.n
    alpha = 1.0 / (n - 1)
    mass = 1.0 - eps - (j - 1) * p1  # left for q and the k-j entries below
    if mass <= 0.0:
        return None
    q_hi = min(p1, mass * (1.0 - 1e-12))  # p > 0 needs q < mass
    q_lo = max(mass / (k - j + 1), _ratio_power(j, n) * p1 * (1.0 + 1e-12))
    if q_lo >= q_hi:
        return None

    w1 = _neg_pow(p1, alpha)

    def residual(q):
        p = (mass - q) / (k - j)
        return (j - 1) * (_neg_pow(p, alpha) - w1) - _neg_pow(q, alpha)

    g_lo, g_hi = residual(q_lo), residual(q_hi)
    lo, hi = q_lo, q_hi
    if g_lo > 0.0 or g_hi < 0.0:
        # Endpoints do not bracket; scan for an interior sign change.
        qs = [q_lo + (q_hi - q_lo) * t / _SCAN_POINTS for t in range(_SCAN_POINTS + 1)]
        bracket = None
        prev_q, prev_g = qs[0], residual(qs[0])
        for q in qs[1:]:
            g = residual(q)
            if prev_g <= 0.0 <= g:
                bracket = (prev_q, q)
                break
            prev_q, prev_g = q, g
        if bracket is None:
            return None
        lo, hi = bracket
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_TOL * max(1.0, hi):
            break
    q = 0.5 * (lo + hi)
    p = (mass - q) / (k - j)
    if not (0.0 < p <= q * (1.0 + 1e-9) and q <= p1 * (1.0 + 1e-9)):
        return None
    return q, p


def upper_bound(query: BoundQuery) -> BoundResult:
    """Max-confidence upper bound u(N, p1, eps, k) for optimal policies."""
    p1, eps, k, n = query.p1, query.eps, query.k, query.n
    alpha = 1.0 / (n - 1)
    if case_k_applies(query):
        residual_mass = 1.0 + p1 - eps - k * p1  # the k-th accuracy at the corner
        w1 = _neg_pow(p1, alpha)
        wk = _neg_pow(residual_mass, alpha)
        u = 1.0 - (k - 1) * w1 / ((k - 1) * w1 + wk)
        if not 0.0 < u < 1.0:
            raise InfeasibleBound(f"case-k value {u!r} escaped (0, 1)")
        return BoundResult(u, "k")
    for j in range(2, k):
        solved = _solve_case_j(query, j)
        if solved is None:
            continue
        q, p = solved
        w1 = _neg_pow(p1, alpha)
        wq = _neg_pow(q, alpha)
        u = wq / ((j - 1) * w1 + wq)
        if not 0.0 < u < 1.0:
            raise InfeasibleBound(f"case-j value {u!r} escaped (0, 1)")
        return BoundResult(u, "j", j=j, witness=(q, p))
    # All-mass-on-one-answer would be the only case left; it cannot occur.
    raise InfeasibleBound(f"no feasible case for {query!r}")


def _check_lower_args(p1: float, p2: float, n: float):
    if not 0.0 < p2 < p1 < 1.0:
        raise DomainError(f"need 0 < p2 < p1 < 1, got p1={p1!r}, p2={p2!r}")
    if not n > 1.0:
        raise DomainError(f"N must exceed 1, got {n!r}")


def lower_bound_integer_s(p1: float, p2: float, n: float) -> float:
    """Sharper max-confidence floor using the integer spread count s.

    s is the smallest integer with p1 + s*p2 >= 1; the floor is
    1 - s*a/(s + a) with a = (p2/p1)^(1/(N-1)).  Real-valued N > 1 is
    accepted so the N -> 1+ limit (floor -> 1) can be probed directly.
    """
    _check_lower_args(p1, p2, n)
    s = max(1, math.ceil((1.0 - p1) / p2 - 1e-12))
    a = math.exp(math.log(p2 / p1) / (n - 1.0))
    return 1.0 - s * a / (s + a)


def lower_bound_closed(p1: float, p2: float, n: float) -> float:
    """Closed-form max-confidence floor 1 - m*a/(m + a*p2), m = 1-p1+p2.

    Always at most lower_bound_integer_s because m/p2 exceeds the integer
    spread count s.
    """
    _check_lower_args(p1, p2, n)
    a = math.exp(math.log(p2 / p1) / (n - 1.0))
    m = 1.0 - p1 + p2
    return 1.0 - m * a / (m + a * p2)


def bounds_sweep_rows(p1: float, p2: float, eps: float, k: int, n_values):
    """(N, upper, lower_closed, lower_integer_s) tuples over a budget sweep."""
    rows = []
    for n in n_values:
        upper = upper_bound(BoundQuery(p1=p1, eps=eps, k=k, n=n)).value
        rows.append(
            (
                int(n),
                upper,
                lower_bound_closed(p1, p2, n),
                lower_bound_integer_s(p1, p2, n),
            )
        )
    return rows

"""Coverage-aligned training losses and the overconfidence factor F.

The per-example pass@N objective is -log(1-(1-p)^N).  Its p-derivative
factorizes as F(N, p) * d/dp(-log p) with

    F(N, p) = N (1-p)^(N-1) p / (1 - (1-p)^N),

so the whole family drops into a cross-entropy trainer as a scalar weight
on the usual gradient.  F is identically 1 at N=1, strictly decreasing in
p for N>1, and collapses to ~0 once p exceeds roughly 1/N -- that cutoff
is what stops confidence from growing.
"""

import math
from dataclasses import dataclass

from .errors import DomainError, InfiniteLossError

__all__ = [
    "LossSpec",
    "FilterPolicy",
    "dco_loss",
    "dco_dloss_dp",
    "dco_factor",
    "stepwise_factor",
    "full_proof_factor",
    "focal_loss",
    "focal_dloss_dp",
    "filter_batch",
]

# Below this confidence F is 1 to double precision; returning exactly 1
# keeps the removable singularity at p=0 out of training loops.
_TINY_P = 1e-12


def _check_budget(n: int) -> int:
    if n != int(n) or int(n) < 1:
        raise DomainError(f"N must be a positive integer, got {n!r}")
    return int(n)


def dco_loss(p: float, n: int) -> float:
    """Per-example coverage loss -log(1-(1-p)^n); equals -log p at n=1."""
    n = _check_budget(n)
    p = float(p)
    if p == 0.0:
        raise InfiniteLossError("zero confidence makes the coverage loss infinite")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"confidence must lie in (0, 1], got {p!r}")
    if n == 1:
        return -math.log(p)
    if p == 1.0:
        return 0.0
    return -math.log(-math.expm1(n * math.log1p(-p)))


def dco_dloss_dp(p: float, n: int) -> float:
    """Derivative of dco_loss in p: F(n, p) * d/dp(-log p) = -F(n, p)/p."""
    n = _check_budget(n)
    p = float(p)
    if p == 0.0:
        raise InfiniteLossError("derivative of the coverage loss diverges at p=0")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"confidence must lie in (0, 1], got {p!r}")
    return -dco_factor(p, n) / p


def dco_factor(p: float, n: int) -> float:
    """Overconfidence factor F(n, p) = n(1-p)^(n-1)p / (1-(1-p)^n) in [0, 1]."""
    n = _check_budget(n)
    p = float(p)
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise DomainError(f"confidence must lie in [0, 1], got {p!r}")
    if n == 1:
        return 1.0
    if p < _TINY_P:
        return 1.0
    if p == 1.0:
        return 0.0
    log1m = math.log1p(-p)
    numerator = math.exp(math.log(n) + (n - 1) * log1m + math.log(p))
    denominator = -math.expm1(n * log1m)
    return min(numerator / denominator, 1.0)


def stepwise_factor(p_step: float, n_eff: int) -> float:
    """Per-step gradient weight F(n_eff, p_step) for step-supervised training."""
    return dco_factor(p_step, n_eff)


def full_proof_factor(step_probs, n: int) -> float:
    """F evaluated at the product of per-step confidences of a whole proof."""
    n = _check_budget(n)
    probs = [float(p) for p in step_probs]
    if not probs:
        raise DomainError("a proof needs at least one step")
    log_total = 0.0
    for p in probs:
        if not 0.0 < p <= 1.0:
            raise DomainError(f"step confidence must lie in (0, 1], got {p!r}")
        log_total += math.log(p)
    return dco_factor(math.exp(log_total), n)


def focal_loss(p: float, gamma: float) -> float:
    """Focal loss -(1-p)^gamma * log p; reduces to -log p at gamma=0."""
    p = float(p)
    gamma = float(gamma)
    if gamma < 0.0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    if p == 0.0:
        raise InfiniteLossError("zero confidence makes the focal loss infinite")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"confidence must lie in (0, 1], got {p!r}")
    if gamma == 0.0:
        return -math.log(p)
    if p == 1.0:
        return 0.0
    return -((1.0 - p) ** gamma) * math.log(p)


def focal_dloss_dp(p: float, gamma: float) -> float:
    """Derivative gamma(1-p)^(gamma-1) log p - (1-p)^gamma / p."""
    p = float(p)
    gamma = float(gamma)
    if gamma < 0.0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    if p == 0.0:
        raise InfiniteLossError("derivative of the focal loss diverges at p=0")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"confidence must lie in (0, 1], got {p!r}")
    if gamma == 0.0:
        return -1.0 / p
    if p == 1.0:
        # Both terms vanish in the limit p -> 1 for gamma > 0.
        return 0.0
    return gamma * (1.0 - p) ** (gamma - 1.0) * math.log(p) - (1.0 - p) ** gamma / p


_DCO_KINDS = ("dco", "dco_step", "dco_fullproof")
_KINDS = ("ce",) + _DCO_KINDS + ("focal", "grpo")


@dataclass(frozen=True)
class LossSpec:
    """Which training loss to run and its parameter.

    ``n`` is the coverage budget N' (or N_eff for the step-wise kind) and
    ``gamma`` the focal exponent.  dco(1) and focal(0) behave bit-for-bit
    like ce.
    """

    kind: str
    n: int = None
    gamma: float = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if self.kind in _DCO_KINDS or self.kind == "grpo":
            if self.n is None or int(self.n) < 1:
                raise DomainError(f"{self.kind} needs a positive integer N, got {self.n!r}")
            object.__setattr__(self, "n", int(self.n))
        if self.kind == "focal":
            if self.gamma is None or float(self.gamma) < 0.0:
                raise DomainError(f"focal needs a nonnegative gamma, got {self.gamma!r}")
            object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def ce(cls):
        return cls("ce")

    @classmethod
    def dco(cls, n: int):
        return cls("dco", n=n)

    @classmethod
    def dco_step(cls, n_eff: int):
        return cls("dco_step", n=n_eff)

    @classmethod
    def dco_fullproof(cls, n: int):
        return cls("dco_fullproof", n=n)

    @classmethod
    def focal(cls, gamma: float):
        return cls("focal", gamma=gamma)

    @classmethod
    def grpo(cls, n: int):
        return cls("grpo", n=n)

    def is_dco_family(self) -> bool:
        return self.kind in _DCO_KINDS

    def gradient_weight(self, p: float) -> float:
        """Scalar w(p) such that the logit gradient is w(p)*(softmax - onehot).

        For a loss L(p) this is -p*L'(p): 1 for ce, F(n, p) for the dco
        family, and (1-p)^g - g*p*(1-p)^(g-1)*log(p) for focal.
        """
        if self.kind == "ce":
            return 1.0
        if self.kind in _DCO_KINDS:
            return dco_factor(p, self.n)
        if self.kind == "focal":
            if self.gamma == 0.0:
                return 1.0
            p = float(p)
            if p == 1.0:
                return 0.0
            g = self.gamma
            return (1.0 - p) ** g - g * p * (1.0 - p) ** (g - 1.0) * math.log(p)
        raise DomainError(f"{self.kind} has no supervised gradient weight")


@dataclass(frozen=True)
class FilterPolicy:
    """Batch filtering rule on F: drop examples with F below threshold_eps.

    ``replacement`` asks the trainer to pull substitute examples so the
    effective batch size stays fixed; the filter itself only returns
    indices and stays pure.
    """

    threshold_eps: float = 0.3
    replacement: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold_eps < 1.0:
            raise DomainError(
                f"threshold_eps must lie in (0, 1), got {self.threshold_eps!r}"
            )


def filter_batch(confidences, spec: LossSpec, policy: FilterPolicy):
    """Split indices into (kept, dropped) by the F >= threshold rule.

    Only meaningful for the dco family; the order of kept indices follows
    the input order.
    """
    if not spec.is_dco_family():
        raise DomainError(f"filter_batch requires a DCO-family loss, got {spec.kind!r}")
    kept, dropped = [], []
    for i, p in enumerate(confidences):
        if dco_factor(p, spec.n) >= policy.threshold_eps:
            kept.append(i)
        else:
            dropped.append(i)
    return kept, dropped

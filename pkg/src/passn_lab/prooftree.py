"""Synthetic tactic-tree environments and step-supervised policy training.

States are explicit integer ids; each state exposes B tactics whose
transitions either move to another state, end the rollout as INVALID, or
finish the proof (QED).  Golden proofs are known-valid tactic sequences
used as supervised signal.  Rollouts sample tactics from a per-state
softmax policy until QED, an invalid tactic, or the depth limit.

Training weighs each (state, tactic) gradient by F(N_eff, p), so bigger
N_eff spreads per-state confidence over roughly N_eff tactics: wider
search trees that favor short proofs, against narrow deep trees at small
N_eff.  A proof of length k then succeeds within N samples roughly once
N exceeds N_eff^k.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, TrainingDiverged
from .losses import dco_factor, full_proof_factor
from .seeding import derive_rng

__all__ = [
    "DEFAULT_MAX_DEPTH",
    "GoldenProof",
    "ProofEnv",
    "StepPolicy",
    "RolloutOutcome",
    "generate_env",
    "build_mixed_env",
    "train_step_policy",
    "train_full_proof_policy",
    "rollout",
    "pass_at_n_search",
    "search_outcomes",
    "ensemble_search",
    "full_proof_dco_weight",
]

DEFAULT_MAX_DEPTH = 50

_STATUS_NAMES = {
    kernels.STATUS_DEPTH_LIMIT: "depth_limit",
    kernels.STATUS_QED: "qed",
    kernels.STATUS_INVALID: "invalid",
}


@dataclass(frozen=True)
class GoldenProof:
    start: int
    tactics: tuple

    def __post_init__(self):
        object.__setattr__(self, "tactics", tuple(int(t) for t in self.tactics))
        if len(self.tactics) < 1:
            raise DomainError("a golden proof needs at least one tactic")

    def __len__(self):
        return len(self.tactics)


@dataclass(frozen=True, eq=False)
class ProofEnv:
    """Immutable tactic-tree environment."""

    branching: int
    transitions: np.ndarray  # (states x branching), QED/INVALID sentinels
    golden_proofs: tuple

    def __post_init__(self):
        transitions = np.asarray(self.transitions, dtype=np.int64)
        if transitions.ndim != 2 or transitions.shape[1] != self.branching:
            raise DomainError("transition table must be (states x branching)")
        n_states = transitions.shape[0]
        valid = (
            (transitions == kernels.TRANSITION_QED)
            | (transitions == kernels.TRANSITION_INVALID)
            | ((transitions >= 0) & (transitions < n_states))
        )
        if not valid.all():
            raise DomainError("transition targets must be states or sentinels")
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "golden_proofs", tuple(self.golden_proofs))
        for proof in self.golden_proofs:
            if not self.replays_to_qed(proof):
                raise DomainError(f"golden proof {proof} does not replay to QED")

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def theorems(self) -> tuple:
        """Distinct golden-proof start states, in first-seen order."""
        seen = []
        for proof in self.golden_proofs:
            if proof.start not in seen:
                seen.append(proof.start)
        return tuple(seen)

    def replays_to_qed(self, proof: GoldenProof) -> bool:
        state = proof.start
        if not 0 <= state < self.state_count:
            return False
        for i, tactic in enumerate(proof.tactics):
            if not 0 <= tactic < self.branching:
                return False
            nxt = self.transitions[state, tactic]
            if nxt == kernels.TRANSITION_QED:
                return i == len(proof.tactics) - 1
            if nxt == kernels.TRANSITION_INVALID:
                return False
            state = int(nxt)
        return False

    def golden_steps(self):
        """All (state, tactic) supervision pairs, proofs in declaration order."""
        pairs = []
        for proof in self.golden_proofs:
            state = proof.start
            for tactic in proof.tactics:
                pairs.append((state, tactic))
                nxt = self.transitions[state, tactic]
                if nxt >= 0:
                    state = int(nxt)
        return pairs

    def to_json(self) -> str:
        payload = {
            "branching": self.branching,
            "transitions": self.transitions.tolist(),
            "golden_proofs": [
                {"start": p.start, "tactics": list(p.tactics)}
                for p in self.golden_proofs
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ProofEnv":
        payload = json.loads(text)
        return cls(
            branching=int(payload["branching"]),
            transitions=np.array(payload["transitions"], dtype=np.int64),
            golden_proofs=tuple(
                GoldenProof(int(p["start"]), tuple(p["tactics"]))
                for p in payload["golden_proofs"]
            ),
        )


@dataclass(frozen=True, eq=False)
class StepPolicy:
    """Per-state tactic logits."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[1] < 2:
            raise DomainError("step policy must be (states x tactics), B >= 2")
        if not np.all(np.isfinite(logits)):
            raise DomainError("step policy logits must be finite")
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, state_count: int, branching: int) -> "StepPolicy":
        return cls(np.zeros((state_count, branching)))

    def probs(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class RolloutOutcome:
    status: str  # "qed" | "invalid" | "depth_limit"
    depth: int


def generate_env(
    state_count: int,
    branching: int,
    golden_proof_lengths,
    valid_fraction: float,
    seed: int,
) -> ProofEnv:
    """Random environment with one embedded golden path per requested length.

    Each golden proof occupies a fresh chain of states ending in QED;
    every other (state, tactic) edge is INVALID with probability
    1-valid_fraction, otherwise it jumps to a uniformly random state.
    """
    lengths = [int(k) for k in golden_proof_lengths]
    if any(k < 1 for k in lengths):
        raise DomainError("golden proof lengths must be positive")
    if branching < 2 or state_count < 1:
        raise DomainError("need at least two tactics and one state")
    if not 0.0 < valid_fraction <= 1.0:
        raise DomainError(f"valid_fraction must lie in (0, 1], got {valid_fraction!r}")
    if sum(lengths) > state_count:
        raise DomainError(
            f"infeasible embedding: {sum(lengths)} chain states requested, "
            f"only {state_count} available"
        )
    rng = derive_rng(seed, "env")
    transitions = np.full((state_count, branching), np.iinfo(np.int64).min, np.int64)
    proofs = []
    offset = 0
    for k in lengths:
        tactics = rng.integers(branching, size=k)
        for i in range(k):
            state = offset + i
            nxt = kernels.TRANSITION_QED if i == k - 1 else offset + i + 1
            transitions[state, tactics[i]] = nxt
        proofs.append(GoldenProof(offset, tuple(int(t) for t in tactics)))
        offset += k
    unset = transitions == np.iinfo(np.int64).min
    for state in range(state_count):
        for b in range(branching):
            if not unset[state, b]:
                continue
            if rng.random() < valid_fraction:
                transitions[state, b] = rng.integers(state_count)
            else:
                transitions[state, b] = kernels.TRANSITION_INVALID
    return ProofEnv(branching=branching, transitions=transitions, golden_proofs=tuple(proofs))


def build_mixed_env(
    n_narrow: int = 5,
    n_wide: int = 5,
    chain_length: int = 6,
    branching: int = 12,
    seed: int = 0,
):
    """Reference environment mixing deep-narrow and shallow-wide theorems.

    Narrow theorems are supervised chains of ``chain_length`` steps; only
    a confident per-step policy finishes them.  Each wide theorem starts
    one hop above the head of a *decoy* chain (supervised, but not itself
    a test theorem): every tactic at the wide start enters the decoy head,
    where an unsupervised shortcut tactic ends the proof.  Policies that
    concentrate on the supervised tactic starve the shortcut; policies
    that keep exploration wide find it.  Evaluate with
    max_depth = chain_length so the long way through the decoy chain
    (1 + chain_length steps) stays out of reach.

    Returns (env, narrow_theorems, wide_theorems).
    """
    rng = derive_rng(seed, "mixed-env")
    n_chains = n_narrow + n_wide
    state_count = n_chains * chain_length + n_wide
    transitions = np.full((state_count, branching), kernels.TRANSITION_INVALID, np.int64)
    proofs = []
    heads = []
    for c in range(n_chains):
        offset = c * chain_length
        heads.append(offset)
        tactics = rng.integers(branching, size=chain_length)
        for i in range(chain_length):
            state = offset + i
            nxt = kernels.TRANSITION_QED if i == chain_length - 1 else offset + i + 1
            transitions[state, tactics[i]] = nxt
        proofs.append(GoldenProof(offset, tuple(int(t) for t in tactics)))
    narrow_theorems = tuple(heads[:n_narrow])
    wide_starts = []
    for w in range(n_wide):
        start = n_chains * chain_length + w
        wide_starts.append(start)
        decoy_head = heads[n_narrow + w]
        transitions[start, :] = decoy_head
        supervised = int(proofs[n_narrow + w].tactics[0])
        shortcut = next(b for b in range(branching) if b != supervised)
        transitions[decoy_head, shortcut] = kernels.TRANSITION_QED
    env = ProofEnv(branching=branching, transitions=transitions, golden_proofs=tuple(proofs))
    return env, narrow_theorems, tuple(wide_starts)


def train_step_policy(
    policy: StepPolicy,
    env: ProofEnv,
    n_eff: int,
    epochs: int,
    lr: float,
    seed: int,
) -> StepPolicy:
    """Step-supervised training with per-step weight F(n_eff, p); n_eff=1 is CE."""
    if n_eff < 1 or epochs < 1 or lr <= 0:
        raise DomainError("n_eff, epochs and lr must be positive")
    logits = policy.logits.copy()
    pairs = env.golden_steps()
    if not pairs:
        raise DomainError("environment has no golden supervision pairs")
    rng = derive_rng(seed, "train-step")
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        for idx in order:
            state, tactic = pairs[idx]
            row = logits[state]
            row_probs = np.exp(row - row.max())
            row_probs /= row_probs.sum()
            w = dco_factor(row_probs[tactic], n_eff)
            logits[state] -= lr * w * row_probs
            logits[state, tactic] += lr * w
        if not np.all(np.isfinite(logits)):
            raise TrainingDiverged(f"non-finite step logits at epoch {epoch + 1}")
    return StepPolicy(logits)


def train_full_proof_policy(
    policy: StepPolicy,
    env: ProofEnv,
    n: int,
    epochs: int,
    lr: float,
    seed: int,
) -> StepPolicy:
    """Whole-proof variant: every step of a proof shares F(n, prod of steps)."""
    if n < 1 or epochs < 1 or lr <= 0:
        raise DomainError("n, epochs and lr must be positive")
    logits = policy.logits.copy()
    rng = derive_rng(seed, "train-fullproof")
    proofs = env.golden_proofs
    for epoch in range(epochs):
        order = rng.permutation(len(proofs))
        for idx in order:
            proof = proofs[idx]
            current = StepPolicy(logits)
            w = full_proof_dco_weight(current, env, proof, n)
            probs = current.probs()
            state = proof.start
            for tactic in proof.tactics:
                logits[state] -= lr * w * probs[state]
                logits[state, tactic] += lr * w
                nxt = env.transitions[state, tactic]
                if nxt >= 0:
                    state = int(nxt)
        if not np.all(np.isfinite(logits)):
            raise TrainingDiverged(f"non-finite logits at epoch {epoch + 1}")
    return StepPolicy(logits)


def _cum_rows(policy: StepPolicy) -> np.ndarray:
    return np.cumsum(policy.probs(), axis=1)


def rollout(
    policy: StepPolicy,
    env: ProofEnv,
    start_state: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
    seed: int = 0,
) -> RolloutOutcome:
    """Sample tactics from the policy until QED, INVALID, or the depth limit."""
    if not 0 <= start_state < env.state_count:
        raise DomainError(f"unknown start state {start_state!r}")
    if max_depth < 1:
        raise DomainError("max_depth must be positive")
    uniforms = derive_rng(seed, "rollout").random((1, max_depth))
    status, depth = kernels.batch_rollouts(
        _cum_rows(policy), env.transitions, start_state, max_depth, uniforms
    )
    return RolloutOutcome(status=_STATUS_NAMES[int(status[0])], depth=int(depth[0]))


def search_outcomes(
    policy: StepPolicy,
    env: ProofEnv,
    theorems,
    n: int,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
):
    """Per-theorem (solved, depth of first successful rollout or -1)."""
    if n < 1:
        raise DomainError("N must be positive")
    cum = _cum_rows(policy)
    results = []
    for theorem in theorems:
        if not 0 <= theorem < env.state_count:
            raise DomainError(f"unknown start state {theorem!r}")
        uniforms = derive_rng(seed, "search", theorem).random((n, max_depth))
        status, depths = kernels.batch_rollouts(
            cum, env.transitions, theorem, max_depth, uniforms
        )
        hits = np.nonzero(status == kernels.STATUS_QED)[0]
        if hits.size:
            results.append((True, int(depths[hits[0]])))
        else:
            results.append((False, -1))
    return results


def pass_at_n_search(
    policy: StepPolicy,
    env: ProofEnv,
    theorems,
    n: int,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> float:
    """Fraction of theorems with at least one QED among n rollouts each."""
    outcomes = search_outcomes(policy, env, theorems, n, seed, max_depth)
    if not outcomes:
        raise DomainError("need at least one theorem")
    return sum(solved for solved, _ in outcomes) / len(outcomes)


def ensemble_search(
    policies,
    env: ProofEnv,
    theorems,
    per_policy_n: int,
    seed: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
):
    """Solve with every policy at per_policy_n rollouts each.

    Returns (success fraction, attribution) where attribution is a bool
    array of shape (policies x theorems): which policies solved which
    theorems.  Total budget is len(policies) * per_policy_n.
    """
    policies = list(policies)
    if not policies:
        raise DomainError("ensemble needs at least one policy")
    theorems = list(theorems)
    attribution = np.zeros((len(policies), len(theorems)), dtype=bool)
    for pi, policy in enumerate(policies):
        cum = _cum_rows(policy)
        for ti, theorem in enumerate(theorems):
            uniforms = derive_rng(seed, "ensemble", pi, theorem).random(
                (per_policy_n, max_depth)
            )
            status, _ = kernels.batch_rollouts(
                cum, env.transitions, theorem, max_depth, uniforms
            )
            attribution[pi, ti] = bool((status == kernels.STATUS_QED).any())
    solved = attribution.any(axis=0)
    return float(solved.mean()), attribution


def full_proof_dco_weight(
    policy: StepPolicy, env: ProofEnv, golden_proof: GoldenProof, n: int
) -> float:
    """F(n, product of the proof's step confidences) under the current policy."""
    if not env.replays_to_qed(golden_proof):
        raise DomainError(f"proof {golden_proof} is not valid in this environment")
    probs = policy.probs()
    state = golden_proof.start
    step_probs = []
    for tactic in golden_proof.tactics:
        step_probs.append(float(probs[state, tactic]))
        nxt = env.transitions[state, tactic]
        if nxt >= 0:
            state = int(nxt)
    return full_proof_factor(step_probs, n)

"""Deterministic RNG streams derived from a root seed and string labels.

Every stochastic component draws from its own labeled stream backed by the
counter-based Philox generator, so adding a new sub-experiment never
perturbs the draws of an existing one.  The same (seed, labels) pair always
yields the same stream.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    """Build a SeedSequence keyed on ``seed`` and a label path."""
    text = "/".join(str(label) for label in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(seed) & _MASK64, *words])


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the (seed, labels) stream."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *labels)))


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit integer sub-seed for the (seed, labels) stream."""
    return int(seed_sequence(seed, *labels).generate_state(1, np.uint64)[0] >> 1)

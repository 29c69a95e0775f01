"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

Two inner loops dominate the library's runtime: the exhaustive scan over
simplex grid points used by the brute-force allocation oracle, and batched
tactic-tree rollouts.  Both exist in two semantically identical versions:
a loop form that numba compiles, and a vectorized numpy form used when
numba is unavailable or disabled.

Set PASSN_LAB_NUMBA=0 to force the numpy path.  Both paths consume the
same pre-drawn uniforms and the same precomputed tables, so they produce
bit-identical results; benchmarks/bench_kernels.py times them against
each other and tests/test_kernels.py asserts the agreement.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "STATUS_DEPTH_LIMIT",
    "STATUS_QED",
    "STATUS_INVALID",
    "TRANSITION_QED",
    "TRANSITION_INVALID",
    "simplex_grid_scan",
    "batch_rollouts",
]

# Transition table sentinels and rollout status codes.
TRANSITION_QED = -2
TRANSITION_INVALID = -1
STATUS_DEPTH_LIMIT = 0
STATUS_QED = 1
STATUS_INVALID = 2


def _numba_requested() -> bool:
    return os.environ.get("PASSN_LAB_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "off",
        "no",
    )


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# Simplex grid scan: argmin of sum_i p[i] * pow_table[m[i]] over all integer
# compositions m of `resolution` into len(p) parts, in ascending
# lexicographic order of (m[0], ..., m[R-2]).
# ---------------------------------------------------------------------------


def _grid_scan_loop(p, pow_table, resolution):
    big_r = p.shape[0]
    best_m = np.zeros(big_r, np.int64)
    best_m[big_r - 1] = resolution
    if big_r == 1:
        return best_m
    d = np.zeros(big_r, np.int64)
    best = np.inf
    while True:
        total = 0
        for i in range(big_r - 1):
            total += d[i]
        d[big_r - 1] = resolution - total
        obj = 0.0
        for i in range(big_r):
            obj += p[i] * pow_table[d[i]]
        if obj < best:
            best = obj
            for i in range(big_r):
                best_m[i] = d[i]
        # Advance to the next composition: bump the rightmost free digit
        # whose prefix still fits, zeroing everything after it.
        advanced = False
        i = big_r - 2
        while i >= 0:
            prefix = 0
            for t in range(i + 1):
                prefix += d[t]
            if prefix + 1 <= resolution:
                d[i] += 1
                for t in range(i + 1, big_r - 1):
                    d[t] = 0
                advanced = True
                break
            i -= 1
        if not advanced:
            return best_m


def _prefix_compositions(depth, budget):
    """All tuples of `depth` nonnegative ints with sum <= budget, lex order."""
    if depth == 0:
        yield (), budget
        return
    for v in range(budget + 1):
        for rest, rem in _prefix_compositions(depth - 1, budget - v):
            yield (v,) + rest, rem


def _grid_scan_numpy(p, pow_table, resolution):
    big_r = p.shape[0]
    best_m = np.zeros(big_r, np.int64)
    best_m[big_r - 1] = resolution
    if big_r == 1:
        return best_m
    best = np.inf
    for prefix, budget in _prefix_compositions(big_r - 2, resolution):
        # Same left-to-right accumulation order as the loop kernel.
        obj0 = 0.0
        for i, v in enumerate(prefix):
            obj0 += p[i] * pow_table[v]
        a = np.arange(budget + 1)
        obj = obj0 + p[big_r - 2] * pow_table[a]
        obj = obj + p[big_r - 1] * pow_table[budget - a]
        k = int(np.argmin(obj))
        if obj[k] < best:
            best = obj[k]
            best_m[: big_r - 2] = prefix
            best_m[big_r - 2] = k
            best_m[big_r - 1] = budget - k
    return best_m


# ---------------------------------------------------------------------------
# Batched tactic-tree rollouts.  cum_rows holds the per-state cumulative
# tactic probabilities; transitions holds next-state ids with the QED and
# INVALID sentinels above.  uniforms has shape (n_rollouts, max_depth) and
# is consumed position-for-position identically by both paths.
# ---------------------------------------------------------------------------


def _rollouts_loop(cum_rows, transitions, start, max_depth, uniforms):
    n = uniforms.shape[0]
    branching = cum_rows.shape[1]
    status = np.zeros(n, np.int64)
    depths = np.zeros(n, np.int64)
    for r in range(n):
        state = start
        st = STATUS_DEPTH_LIMIT
        dep = max_depth
        for d in range(max_depth):
            u = uniforms[r, d]
            b = 0
            while b < branching - 1 and u >= cum_rows[state, b]:
                b += 1
            nxt = transitions[state, b]
            if nxt == TRANSITION_QED:
                st = STATUS_QED
                dep = d + 1
                break
            if nxt == TRANSITION_INVALID:
                st = STATUS_INVALID
                dep = d + 1
                break
            state = nxt
        status[r] = st
        depths[r] = dep
    return status, depths


def _rollouts_numpy(cum_rows, transitions, start, max_depth, uniforms):
    n = uniforms.shape[0]
    status = np.full(n, STATUS_DEPTH_LIMIT, np.int64)
    depths = np.full(n, max_depth, np.int64)
    states = np.full(n, start, np.int64)
    active = np.ones(n, bool)
    for d in range(max_depth):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        u = uniforms[idx, d]
        rows = cum_rows[states[idx]]
        # First b with u < cum[b], capped at the last tactic; identical to
        # the linear scan in the loop kernel.
        b = (u[:, None] >= rows[:, :-1]).sum(axis=1)
        nxt = transitions[states[idx], b]
        qed = nxt == TRANSITION_QED
        inv = nxt == TRANSITION_INVALID
        done = qed | inv
        status[idx[qed]] = STATUS_QED
        status[idx[inv]] = STATUS_INVALID
        depths[idx[done]] = d + 1
        states[idx[~done]] = nxt[~done]
        active[idx[done]] = False
    return status, depths


if NUMBA_ENABLED:
    _grid_scan_jit = njit(cache=True)(_grid_scan_loop)
    _rollouts_jit = njit(cache=True)(_rollouts_loop)


def simplex_grid_scan(p, pow_table, resolution: int):
    """Best integer allocation m (sum = resolution) minimizing the objective."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    pow_table = np.ascontiguousarray(pow_table, dtype=np.float64)
    if NUMBA_ENABLED:
        return _grid_scan_jit(p, pow_table, np.int64(resolution))
    return _grid_scan_numpy(p, pow_table, int(resolution))


def batch_rollouts(cum_rows, transitions, start: int, max_depth: int, uniforms):
    """Run one rollout per row of ``uniforms``; returns (status, depth) arrays."""
    cum_rows = np.ascontiguousarray(cum_rows, dtype=np.float64)
    transitions = np.ascontiguousarray(transitions, dtype=np.int64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if NUMBA_ENABLED:
        return _rollouts_jit(
            cum_rows, transitions, np.int64(start), np.int64(max_depth), uniforms
        )
    return _rollouts_numpy(cum_rows, transitions, int(start), int(max_depth), uniforms)

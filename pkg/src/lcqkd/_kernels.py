"""Hot inner loops, with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``LCQKD_DISABLE_NUMBA`` is unset
(or "0"). Both paths consume the same pre-drawn random inputs, so they return
identical results; ``benchmarks/bench_kernels.py`` times one against the other.
"""
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

_disabled = os.environ.get("LCQKD_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")
USE_NUMBA = njit is not None and not _disabled


# ---------------------------------------------------------------- numpy path

def inverse_cdf_numpy(cdf, u):
    """Index of the first cdf entry strictly above each uniform in ``u``."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int64)


def majority_tally_numpy(flips, k):
    """Count (correct, wrong, rejected) 2k-blocks given per-member flip flags."""
    s = flips.sum(axis=1)
    return int((s < k).sum()), int((s > k).sum()), int((s == k).sum())


def hash_trials_numpy(diff, masks):
    """Run m parity-hash rounds on T independent difference patterns at once.

    diff: (T, L) uint8, 1 where Alice and Bob disagree.
    masks: (T, m, L) uint8; round r uses the first L - 2r entries, never all zero.
    Returns (passed, residual): every round matched / differences left at the end.
    """
    T, L = diff.shape
    m = masks.shape[1]
    cur = diff.astype(np.uint8)
    passed = np.ones(T, dtype=np.bool_)
    rows = np.arange(T)
    for r in range(m):
        n = L - 2 * r
        mk = masks[:, r, :n].astype(np.bool_)
        par = (cur.astype(np.bool_) & mk).sum(axis=1) % 2
        passed &= par == 0
        first = np.argmax(mk, axis=1)
        rest = mk.copy()
        rest[rows, first] = False
        has_two = rest.any(axis=1)
        unmasked = ~mk
        second = np.where(has_two, np.argmax(rest, axis=1), np.argmax(unmasked, axis=1))
        keep = np.ones((T, n), dtype=np.bool_)
        keep[rows, first] = False
        keep[rows, second] = False
        cur = cur[keep].reshape(T, n - 2)
    return passed, cur.sum(axis=1).astype(np.int64)


# ---------------------------------------------------------------- numba path

def _inverse_cdf_loop(cdf, u):
    n = cdf.shape[0]
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        lo = 0
        hi = n
        x = u[i]
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        out[i] = lo if lo < n else n - 1
    return out


def _majority_tally_loop(flips, k):
    ok = 0
    wrong = 0
    rej = 0
    for i in range(flips.shape[0]):
        s = 0
        for j in range(flips.shape[1]):
            if flips[i, j]:
                s += 1
        if s < k:
            ok += 1
        elif s > k:
            wrong += 1
        else:
            rej += 1
    return ok, wrong, rej


def _hash_trials_loop(diff, masks):
    T, L = diff.shape
    m = masks.shape[1]
    passed = np.ones(T, dtype=np.bool_)
    residual = np.zeros(T, dtype=np.int64)
    cur = np.empty(L, dtype=np.uint8)
    for t in range(T):
        for j in range(L):
            cur[j] = diff[t, j]
        n = L
        ok = True
        for r in range(m):
            mk = masks[t, r]
            par = 0
            for j in range(n):
                par ^= cur[j] & mk[j]
            if par != 0:
                ok = False
            # the two lowest masked positions, or the lone masked one and the first free one
            first = -1
            second = -1
            free = -1
            j = 0
            while j < n and second < 0:
                if mk[j]:
                    if first < 0:
                        first = j
                    else:
                        second = j
                elif free < 0:
                    free = j
                j += 1
            if second < 0:
                second = free
            lo = min(first, second)
            hi = max(first, second)
            # compact in place from the first discarded slot on
            w = lo
            for j in range(lo + 1, n):
                if j != hi:
                    cur[w] = cur[j]
                    w += 1
            n -= 2
        passed[t] = ok
        s = 0
        for j in range(n):
            s += cur[j]
        residual[t] = s
    return passed, residual


if njit is not None:
    _inverse_cdf_nb = njit(cache=True, nogil=True)(_inverse_cdf_loop)
    _majority_tally_nb = njit(cache=True, nogil=True)(_majority_tally_loop)
    _hash_trials_nb = njit(cache=True, nogil=True)(_hash_trials_loop)

    def inverse_cdf_numba(cdf, u):
        return _inverse_cdf_nb(np.ascontiguousarray(cdf, dtype=np.float64),
                               np.ascontiguousarray(u, dtype=np.float64))

    def majority_tally_numba(flips, k):
        ok, wrong, rej = _majority_tally_nb(np.ascontiguousarray(flips, dtype=np.bool_), int(k))
        return int(ok), int(wrong), int(rej)

    def hash_trials_numba(diff, masks):
        return _hash_trials_nb(np.ascontiguousarray(diff, dtype=np.uint8),
                               np.ascontiguousarray(masks, dtype=np.uint8))
else:  # pragma: no cover
    inverse_cdf_numba = inverse_cdf_numpy
    majority_tally_numba = majority_tally_numpy
    hash_trials_numba = hash_trials_numpy


IMPLEMENTATIONS = {
    "numpy": {
        "inverse_cdf": inverse_cdf_numpy,
        "majority_tally": majority_tally_numpy,
        "hash_trials": hash_trials_numpy,
    },
    "numba": {
        "inverse_cdf": inverse_cdf_numba,
        "majority_tally": majority_tally_numba,
        "hash_trials": hash_trials_numba,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"
inverse_cdf = IMPLEMENTATIONS[BACKEND]["inverse_cdf"]
majority_tally = IMPLEMENTATIONS[BACKEND]["majority_tally"]
hash_trials = IMPLEMENTATIONS[BACKEND]["hash_trials"]

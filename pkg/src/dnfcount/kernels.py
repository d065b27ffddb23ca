"""Numeric inner loops, each in a numba and a numpy flavour.

Randomness inside the KLM loop comes from a counter-based generator
(splitmix64 finalizer applied to ``key + counter * golden``), so the value of
variable ``v`` in sample ``j`` is a pure function of ``(key, j, v)``.  That
lets the loop materialise assignments lazily, one literal at a time, and makes
the two backends bit-identical.
"""
import math

import numpy as np

from ._backend import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
INV53 = 1.0 / 9007199254740992.0

RNG_ALGORITHM = "splitmix64-counter/v1"


# ---------------------------------------------------------------------------
# counter-based uniforms
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _uniform2(key, j, v):
    x = _mix64(key + (np.uint64(j) + _ONE) * GOLDEN)
    y = _mix64(x + (np.uint64(v) + _ONE) * GOLDEN)
    return float(y >> _S11) * INV53


@njit(cache=True, inline="always")
def _uniform1(key, t):
    y = _mix64(key + (np.uint64(t) + _ONE) * GOLDEN)
    return float(y >> _S11) * INV53


def _mix64_np(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def uniform2_np(key, j, v) -> np.ndarray:
    """Vectorised counterpart of the sample-stream uniform for variables ``v``."""
    jj = np.atleast_1d(np.asarray(j, dtype=np.uint64))
    vv = np.atleast_1d(np.asarray(v, dtype=np.uint64))
    with np.errstate(over="ignore"):
        x = _mix64_np(np.uint64(key) + (jj + _ONE) * GOLDEN)
        y = _mix64_np(x + (vv + _ONE) * GOLDEN)
    return (y >> _S11).astype(np.float64) * INV53


def uniform1_np(key, t: np.ndarray) -> np.ndarray:
    tt = np.atleast_1d(np.asarray(t, dtype=np.uint64))
    with np.errstate(over="ignore"):
        y = _mix64_np(np.uint64(key) + (tt + _ONE) * GOLDEN)
    return (y >> _S11).astype(np.float64) * INV53


# ---------------------------------------------------------------------------
# KLM trial loop
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def klm_loop_numba(offsets, vars0, signs, probs, cum, trials, key_s, key_t):
    n = probs.shape[0]
    m = offsets.shape[0] - 1
    total = cum[m - 1]
    stamp = np.full(n, -1, dtype=np.int64)
    forced = np.zeros(n, dtype=np.int8)
    hits = 0
    j = 0
    have = False
    for t in range(trials):
        if not have:
            x = _uniform2(key_s, j, n) * total
            i = np.searchsorted(cum, x, side="right")
            if i > m - 1:
                i = m - 1
            for a in range(offsets[i], offsets[i + 1]):
                stamp[vars0[a]] = j
                forced[vars0[a]] = signs[a]
            have = True
        k = int(_uniform1(key_t, t) * m)
        if k > m - 1:
            k = m - 1
        ok = True
        for a in range(offsets[k], offsets[k + 1]):
            v = vars0[a]
            if stamp[v] == j:
                val = forced[v]
            else:
                val = 1 if _uniform2(key_s, j, v) < probs[v] else 0
            if val != signs[a]:
                ok = False
                break
        if ok:
            hits += 1
            j += 1
            have = False
    return hits


def klm_loop_numpy(offsets, vars0, signs, probs, cum, trials, key_s, key_t):
    n = probs.shape[0]
    m = offsets.shape[0] - 1
    widths = np.diff(offsets)
    wmax = int(widths.max())
    # padded clause table; pad slots point at a dummy variable that always matches
    col = np.arange(wmax)
    pad = col[None, :] >= widths[:, None]
    idx = np.where(pad, 0, offsets[:-1, None] + col[None, :])
    pvars = np.where(pad, n, vars0[idx])
    psigns = np.where(pad, 1, signs[idx]).astype(np.int8)
    probs_ext = np.append(probs, 2.0)
    total = cum[m - 1]

    stamp = np.full(n + 1, -1, dtype=np.int64)
    forced = np.zeros(n + 1, dtype=np.int8)
    hits = 0
    j = 0
    t = 0
    while t < trials:
        x = uniform2_np(key_s, j, n)[0] * total
        i = min(int(np.searchsorted(cum, x, side="right")), m - 1)
        sl = slice(offsets[i], offsets[i + 1])
        stamp[vars0[sl]] = j
        forced[vars0[sl]] = signs[sl]
        block = 16
        while t < trials:
            stop = min(t + block, trials)
            k = (uniform1_np(key_t, np.arange(t, stop)) * m).astype(np.int64)
            np.minimum(k, m - 1, out=k)
            v = pvars[k]
            val = (uniform2_np(key_s, j, v) < probs_ext[v]).astype(np.int8)
            val = np.where(stamp[v] == j, forced[v], val)
            val[v == n] = 1
            sat = np.all(val == psigns[k], axis=1)
            if sat.any():
                t += int(np.argmax(sat)) + 1
                hits += 1
                j += 1
                break
            t = stop
            block *= 2
    return hits


# ---------------------------------------------------------------------------
# exhaustive enumeration
# ---------------------------------------------------------------------------

def half_weight_tables(probs: np.ndarray, nlow: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights of every bit pattern of the low ``nlow`` and the remaining variables."""

    def table(ps):
        t = np.ones(1)
        for p in ps:
            t = np.concatenate((t * (1.0 - p), t * p))
        return t

    return table(probs[:nlow]), table(probs[nlow:])


@njit(cache=True, nogil=True)
def gray_enum_numba(n, widths, occ_ptr, occ_clause, occ_sign, neg_count, wlow, whigh, nlow):
    m = widths.shape[0]
    cnt = neg_count.copy()
    nsat = 0
    for c in range(m):
        if cnt[c] == widths[c]:
            nsat += 1
    low_mask = (1 << nlow) - 1
    total = 0.0
    comp = 0.0
    g = 0
    if nsat > 0:
        total = wlow[0] * whigh[0]
    for i in range(1, 1 << n):
        v = 0
        while (i >> v) & 1 == 0:
            v += 1
        g ^= 1 << v
        newval = (g >> v) & 1
        for a in range(occ_ptr[v], occ_ptr[v + 1]):
            c = occ_clause[a]
            if occ_sign[a] == newval:
                cnt[c] += 1
                if cnt[c] == widths[c]:
                    nsat += 1
            else:
                if cnt[c] == widths[c]:
                    nsat -= 1
                cnt[c] -= 1
        if nsat > 0:
            # Kahan summation keeps the 2^25-term sum accurate
            y = wlow[g & low_mask] * whigh[g >> nlow] - comp
            s = total + y
            comp = (s - total) - y
            total = s
    return total


def enum_numpy(n, offsets, vars0, signs, wlow, whigh, nlow, block_cells=1 << 22):
    m = offsets.shape[0] - 1
    widths = np.diff(offsets)
    wmax = int(widths.max())
    col = np.arange(wmax)
    pad = col[None, :] >= widths[:, None]
    idx = np.where(pad, 0, offsets[:-1, None] + col[None, :])
    pvars = np.where(pad, n, vars0[idx])
    psigns = np.where(pad, 1, signs[idx])
    shifts = np.arange(n, dtype=np.int64)
    block = max(1, block_cells // (m * wmax + n + 1))
    low_mask = (1 << nlow) - 1
    parts = []
    for start in range(0, 1 << n, block):
        a = np.arange(start, min(start + block, 1 << n), dtype=np.int64)
        bits = np.ones((a.size, n + 1), dtype=np.int64)
        bits[:, :n] = (a[:, None] >> shifts) & 1
        sat = np.all(bits[:, pvars] == psigns, axis=2).any(axis=1)
        a = a[sat]
        parts.append(float(np.sum(wlow[a & low_mask] * whigh[a >> nlow])))
    return math.fsum(parts)

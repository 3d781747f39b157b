"""Pure numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Same stream layout and the same arithmetic order, so the two backends agree
to the last few ulps (transcendentals may round differently).
"""
import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_CTX_MUL = np.uint64(0xD1B54A32D192ED03)
_IDX_MUL = np.uint64(0xAEF17502108EF2D9)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _stream_keys(seed, context, indices):
    with np.errstate(over="ignore"):
        k = _mix64(np.asarray([seed], dtype=np.uint64) ^ _GOLDEN)
        k = _mix64(k ^ (np.asarray([context], dtype=np.uint64) * _CTX_MUL))
        return _mix64(k ^ (np.asarray(indices, dtype=np.uint64) * _IDX_MUL))


def _word_uniform(keys, counters):
    with np.errstate(over="ignore"):
        w = _mix64(keys[:, None] + (counters[None, :] + np.uint64(1)) * _GOLDEN)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def uniform_rows(seed, context, indices, ncols, counter=0):
    keys = _stream_keys(seed, context, indices)
    counters = np.arange(ncols, dtype=np.uint64) + np.uint64(counter)
    return _word_uniform(keys, counters)


def gaussian_rows(seed, context, indices, ncols, counter=0):
    keys = _stream_keys(seed, context, indices)
    q = np.arange(ncols, dtype=np.uint64) + np.uint64(counter)
    pair = q >> np.uint64(1)
    u1 = _word_uniform(keys, np.uint64(2) * pair)
    u2 = _word_uniform(keys, np.uint64(2) * pair + np.uint64(1))
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    odd = (q & np.uint64(1)).astype(bool)
    return np.where(odd[None, :], r * np.sin(theta), r * np.cos(theta))


def binom_upper_tail(k, n, p):
    """P[Binomial(n, p) >= k] by log-space summation of the pmf."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    js = np.arange(k, n + 1, dtype=np.float64)
    logc = np.empty_like(js)
    logc[0] = math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
    # sequential accumulation of C(n, j) / C(n, j - 1), matching the compiled loop
    logc[1:] = np.log((n - js[1:] + 1.0) / js[1:])
    logc = np.cumsum(logc)
    terms = logc + js * math.log(p) + (n - js) * math.log1p(-p)
    top = terms.max()
    return min(1.0, math.exp(top) * float(np.exp(terms - top).sum()))

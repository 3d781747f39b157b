# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: counter-based random streams and binomial tail sums.

Must stay numerically in step with ``_pykernels``; the test-suite compares
both backends element by element.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport lgamma, log, log1p, sqrt, cos, sin, exp, M_PI
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t CTX_MUL = 0xD1B54A32D192ED03ULL
cdef uint64_t IDX_MUL = 0xAEF17502108EF2D9ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t context, uint64_t index) nogil:
    cdef uint64_t k = mix64(seed ^ GOLDEN)
    k = mix64(k ^ (context * CTX_MUL))
    return mix64(k ^ (index * IDX_MUL))


cdef inline double word_uniform(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t w = mix64(key + (counter + 1) * GOLDEN)
    return (<double>(w >> 11) + 0.5) * INV_2_53


def uniform_rows(uint64_t seed, uint64_t context, cnp.uint64_t[::1] indices,
                 Py_ssize_t ncols, uint64_t counter=0):
    cdef Py_ssize_t nrows = indices.shape[0]
    out = np.empty((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef uint64_t key
    with nogil:
        for i in range(nrows):
            key = stream_key(seed, context, indices[i])
            for j in range(ncols):
                o[i, j] = word_uniform(key, counter + j)
    return out


def gaussian_rows(uint64_t seed, uint64_t context, cnp.uint64_t[::1] indices,
                  Py_ssize_t ncols, uint64_t counter=0):
    cdef Py_ssize_t nrows = indices.shape[0]
    out = np.empty((nrows, ncols), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef uint64_t key, q, pair
    cdef double r, theta
    with nogil:
        for i in range(nrows):
            key = stream_key(seed, context, indices[i])
            for j in range(ncols):
                q = counter + j
                pair = q >> 1
                r = sqrt(-2.0 * log(word_uniform(key, 2 * pair)))
                theta = 2.0 * M_PI * word_uniform(key, 2 * pair + 1)
                if q & 1:
                    o[i, j] = r * sin(theta)
                else:
                    o[i, j] = r * cos(theta)
    return out


def binom_upper_tail(Py_ssize_t k, Py_ssize_t n, double p):
    """P[Binomial(n, p) >= k] by log-space summation of the pmf."""
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    cdef double lp = log(p), lq = log1p(-p)
    cdef double logc, term, top = -1e308, total = 0.0
    cdef Py_ssize_t j
    cdef double[::1] logs = np.empty(n - k + 1, dtype=np.float64)
    with nogil:
        logc = lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0)
        for j in range(k, n + 1):
            if j > k:
                logc += log(<double>(n - j + 1) / <double>j)
            term = logc + j * lp + (n - j) * lq
            logs[j - k] = term
            if term > top:
                top = term
        for j in range(n - k + 1):
            total += exp(logs[j] - top)
    return min(1.0, exp(top) * total)

"""Exact statistical helpers for PREDICT / CERTIFY.

The normal quantile and the Clopper-Pearson bound are both found by
bisection against an exactly computable forward function, so their accuracy
can be checked directly against that function.
"""
import math

from .. import kernels

_SQRT2 = math.sqrt(2.0)


class DomainError(ValueError):
    pass


def std_normal_cdf(x):
    """Standard normal CDF via ``erfc`` (accurate in both tails)."""
    return 0.5 * math.erfc(-x / _SQRT2)


def _bisect(f, lo, hi, target, max_iter=400):
    # f increasing on [lo, hi]; stops when the midpoint no longer moves
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile needs 0 < p < 1, got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        # 1 - p is exact here; bisect in the lower tail where erfc keeps relative accuracy
        return -std_normal_quantile(1.0 - p)
    return _bisect(std_normal_cdf, -40.0, 0.0, p)


def clopper_pearson_lower(k, n, alpha):
    """One-sided exact lower confidence bound for a binomial proportion.

    The returned ``p`` solves ``P[Binomial(n, p) >= k] = alpha``.
    """
    if not (isinstance(k, int) or float(k).is_integer()) or not (isinstance(n, int) or float(n).is_integer()):
        raise DomainError("counts must be integers")
    k, n = int(k), int(n)
    if n < 1 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if k == 0:
        return 0.0
    if k == n:
        return alpha ** (1.0 / n)
    return _bisect(lambda p: kernels.binom_upper_tail(k, n, p), 0.0, 1.0, alpha, max_iter=200)


def binom_two_sided_pvalue(k, n):
    """Exact two-sided binomial test against p = 1/2.

    Sums the probability of every outcome no more likely than ``k``. Under
    p = 1/2 those are the outcomes at least as far from n/2, so the sum is
    done in exact integer arithmetic.
    """
    k, n = int(k), int(n)
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    m = min(k, n - k)
    if 2 * m == n:
        return 1.0
    total, c = 0, 1
    for j in range(m + 1):
        total += c
        c = c * (n - j) // (j + 1)
    return min(1.0, (2 * total) / (1 << n))

"""Chi-square tail probabilities and quantiles via the regularized incomplete gamma."""

from __future__ import annotations

import math

from scipy.optimize import brentq

from .errors import ParamError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _lower_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a + 1) * sum_k x^k / ((a + 1) ... (a + k))
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0 or x < 0 or math.isnan(x):
        raise ParamError(f"gamma_q needs a > 0, x >= 0 (got a={a}, x={x})")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return min(1.0, _upper_fraction(a, x))


def _check_dof(k) -> int:
    if int(k) != k or k < 1:
        raise ParamError(f"degrees of freedom must be a positive integer, got {k}")
    return int(k)


def chi_square_sf(x: float, k: int) -> float:
    k = _check_dof(k)
    if x < 0:
        raise ParamError(f"chi-square statistic must be nonnegative, got {x}")
    return gamma_q(0.5 * k, 0.5 * x)


def chi_square_cdf(x: float, k: int) -> float:
    return 1.0 - chi_square_sf(x, k)


def chi_square_quantile(p: float, k: int) -> float:
    """Lower ``p`` quantile, so ``chi_square_quantile(0.95, K)`` is the 5% critical value."""
    k = _check_dof(k)
    if not 0.0 < p < 1.0:
        raise ParamError(f"probability must lie in (0, 1), got {p}")
    target = 1.0 - p
    hi = max(1.0, 2.0 * k)
    while chi_square_sf(hi, k) > target:
        hi *= 2.0
    return brentq(lambda t: chi_square_sf(t, k) - target, 0.0, hi, xtol=1e-12, rtol=1e-14)

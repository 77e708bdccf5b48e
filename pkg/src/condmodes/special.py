"""Log-space beta integrals and truncated Beta quantiles."""
from __future__ import annotations

import math

from scipy.special import gammaln

from . import kernels

_LN_SQRT_2PI = 0.5 * math.log(2 * math.pi)
# Stirling series coefficients B_2k / (2k (2k - 1)).
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360, 1 / 156, -3617 / 122400)


class DomainError(ValueError):
    pass


def _check_shapes(a, b):
    if not (a > 0 and b > 0):
        raise DomainError(f"shape parameters must be positive, got a={a}, b={b}")


def _lgamma_correction(x: float) -> float:
    """log Gamma(x) minus its Stirling approximation, for x >= 10."""
    inv2 = 1.0 / (x * x)
    total = 0.0
    for c in reversed(_STIRLING):
        total = total * inv2 + c
    return total / x


def log_beta(a: float, b: float) -> float:
    """log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b).

    For large shapes the Stirling parts are combined analytically so the big
    terms cancel before rounding.
    """
    _check_shapes(a, b)
    p, q = (a, b) if a <= b else (b, a)
    s = p + q
    if p >= 10:
        corr = _lgamma_correction(p) + _lgamma_correction(q) - _lgamma_correction(s)
        return (-0.5 * math.log(q) + _LN_SQRT_2PI + corr + (p - 0.5) * math.log(p / s)
                + q * math.log1p(-p / s))
    if q >= 10:
        corr = _lgamma_correction(q) - _lgamma_correction(s)
        return float(gammaln(p)) + corr + p - p * math.log(s) + (q - 0.5) * math.log1p(-p / s)
    return float(gammaln(p) + gammaln(q) - gammaln(s))


def log_inc_beta_upper(x: float, a: float, b: float) -> float:
    """log of the upper beta integral, int_x^1 w^(a-1) (1-w)^(b-1) dw."""
    _check_shapes(a, b)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x >= 1.0:
        return -math.inf
    return log_beta(a, b) + kernels.log_betainc_upper(float(x), float(a), float(b))


def log_inc_beta_lower(x: float, a: float, b: float) -> float:
    """log of int_0^x w^(a-1) (1-w)^(b-1) dw."""
    _check_shapes(a, b)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x <= 0.0:
        return -math.inf
    return log_beta(a, b) + kernels.log_betainc_lower(float(x), float(a), float(b))


def trunc_beta_cdf(x: float, a: float, b: float, lower: float) -> float:
    """CDF of Beta(a, b) restricted to [lower, 1]."""
    _check_shapes(a, b)
    if x <= lower:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_ratio = kernels.log_betainc_upper(x, a, b) - kernels.log_betainc_upper(lower, a, b)
    return -math.expm1(log_ratio)


def inv_trunc_beta_cdf(u: float, a: float, b: float, lower: float) -> float:
    """Quantile of Beta(a, b) restricted to [lower, 1], found by bisection.

    The bracket is halved until it reaches floating-point resolution, which
    is finer than 1e-12 everywhere on [0, 1].
    """
    _check_shapes(a, b)
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u must lie in [0, 1], got {u}")
    if not 0.0 <= lower < 1.0:
        raise DomainError(f"lower bound must lie in [0, 1), got {lower}")
    if u <= 0.0:
        return float(lower)
    return kernels.trunc_beta_ppf(float(u), float(a), float(b), float(lower))

"""Pure-Python numeric kernels.

Reference implementation of the routines in ``_ckernels.pyx``. Both modules
expose the same functions with the same signatures; ``condmodes.kernels``
picks the compiled one when it is importable.
"""
import math

import numpy as np
from scipy.special import betaln

IMPLEMENTATION = "python"

_CF_MAXITER = 100000
_CF_EPS = 1e-16
_TINY = 1e-300
_BISECT_MAXITER = 200
_ONE_MINUS = math.nextafter(1.0, 0.0)


def _log_betacf(x, a, b):
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return math.log(h)
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )


def log_betainc_lower(x, a, b):
    """log I_x(a, b), the regularized lower incomplete beta function."""
    if x <= 0.0:
        return -math.inf
    if x >= 1.0:
        return 0.0
    lpre = a * math.log(x) + b * math.log1p(-x) - betaln(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return lpre + _log_betacf(x, a, b) - math.log(a)
    lu = lpre + _log_betacf(1.0 - x, b, a) - math.log(b)
    return math.log(-math.expm1(lu))


def log_betainc_upper(x, a, b):
    """log of 1 - I_x(a, b), evaluated without forming the difference."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return -math.inf
    lpre = a * math.log(x) + b * math.log1p(-x) - betaln(a, b)
    if x > (a + 1.0) / (a + b + 2.0):
        return lpre + _log_betacf(1.0 - x, b, a) - math.log(b)
    ll = lpre + _log_betacf(x, a, b) - math.log(a)
    return math.log(-math.expm1(ll))


def trunc_beta_ppf(u, a, b, lower):
    """Quantile of Beta(a, b) truncated to [lower, 1]."""
    if u <= 0.0:
        return lower
    if u >= 1.0:
        return 1.0
    # Solve log S(x) = log S(lower) + log(1 - u) with S the upper tail.
    target = log_betainc_upper(lower, a, b) + math.log1p(-u)
    lo = lower
    hi = 1.0
    for _ in range(_BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if log_betainc_upper(mid, a, b) > target:
            lo = mid
        else:
            hi = mid
    return min(0.5 * (lo + hi), _ONE_MINUS)


def sample_stick_fractions(ordered, nk, ell, m, uniforms):
    """Map uniforms to truncated-Beta stick fractions of one block.

    Fraction h follows Beta(n_(h) + 1, resid_h + 1) truncated to
    [1 / (m - h + 1), 1], where resid_h is the count left after the h
    largest crossings.
    """
    out = np.empty(ell, dtype=np.float64)
    resid = float(nk)
    for h in range(ell):
        c = float(ordered[h])
        resid = max(resid - c, 0.0)
        out[h] = trunc_beta_ppf(float(uniforms[h]), c + 1.0, resid + 1.0, 1.0 / (m - h))
    return out


def log_block_evidence_path(ordered, nk, m, ell_max):
    """Approximate integrated block likelihood for every mode count 1..ell_max.

    Returns an array whose entry ``l - 1`` is the log evidence with ``l``
    modes located at the ``l`` largest counts.
    """
    out = np.empty(ell_max, dtype=np.float64)
    resid = float(nk)
    acc = 0.0
    for h in range(ell_max):
        c = float(ordered[h])
        resid = max(resid - c, 0.0)
        lower = 1.0 / (m - h)
        a = c + 1.0
        b = resid + 1.0
        acc += betaln(a, b) + log_betainc_upper(lower, a, b) - math.log(m - h - 1)
        out[h] = acc - resid * math.log(m - h - 1)
    return out


def log_block_evidence(ordered, nk, ell, m):
    return float(log_block_evidence_path(ordered, nk, m, ell)[ell - 1])

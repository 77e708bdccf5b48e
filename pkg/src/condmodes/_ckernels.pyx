# cython: language_level=3
"""Compiled numeric kernels; mirrors ``_pykernels`` function for function."""
from libc.math cimport log, log1p, expm1, fabs, fmax, fmin, nextafter, INFINITY
from scipy.special.cython_special cimport betaln

import numpy as np

IMPLEMENTATION = "cython"

DEF CF_MAXITER = 100000
DEF CF_EPS = 1e-16
DEF TINY = 1e-300
DEF BISECT_MAXITER = 200


cdef double _log_betacf(double x, double a, double b) except? -1e308:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < TINY:
        d = TINY
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if fabs(c) < TINY:
            c = TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < TINY:
            d = TINY
        c = 1.0 + aa / c
        if fabs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            return log(h)
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )


cdef double _log_lower(double x, double a, double b) except? -1e308:
    cdef double lpre, lu
    if x <= 0.0:
        return -INFINITY
    if x >= 1.0:
        return 0.0
    lpre = a * log(x) + b * log1p(-x) - betaln(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return lpre + _log_betacf(x, a, b) - log(a)
    lu = lpre + _log_betacf(1.0 - x, b, a) - log(b)
    return log(-expm1(lu))


cdef double _log_upper(double x, double a, double b) except? -1e308:
    cdef double lpre, ll
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return -INFINITY
    lpre = a * log(x) + b * log1p(-x) - betaln(a, b)
    if x > (a + 1.0) / (a + b + 2.0):
        return lpre + _log_betacf(1.0 - x, b, a) - log(b)
    ll = lpre + _log_betacf(x, a, b) - log(a)
    return log(-expm1(ll))


cdef double _ppf(double u, double a, double b, double lower) except? -1e308:
    cdef double target, lo, hi, mid
    cdef int it
    if u <= 0.0:
        return lower
    if u >= 1.0:
        return 1.0
    target = _log_upper(lower, a, b) + log1p(-u)
    lo = lower
    hi = 1.0
    for it in range(BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _log_upper(mid, a, b) > target:
            lo = mid
        else:
            hi = mid
    return fmin(0.5 * (lo + hi), nextafter(1.0, 0.0))


def log_betainc_lower(double x, double a, double b):
    """log I_x(a, b), the regularized lower incomplete beta function."""
    return _log_lower(x, a, b)


def log_betainc_upper(double x, double a, double b):
    """log of 1 - I_x(a, b), evaluated without forming the difference."""
    return _log_upper(x, a, b)


def trunc_beta_ppf(double u, double a, double b, double lower):
    """Quantile of Beta(a, b) truncated to [lower, 1]."""
    return _ppf(u, a, b, lower)


def sample_stick_fractions(const double[:] ordered, double nk, int ell, long m,
                           const double[:] uniforms):
    cdef double[:] out
    cdef double resid = nk
    cdef double c
    cdef int h
    res = np.empty(ell, dtype=np.float64)
    out = res
    for h in range(ell):
        c = ordered[h]
        resid = fmax(resid - c, 0.0)
        out[h] = _ppf(uniforms[h], c + 1.0, resid + 1.0, 1.0 / (m - h))
    return res


def log_block_evidence_path(const double[:] ordered, double nk, long m, int ell_max):
    cdef double[:] out
    cdef double resid = nk
    cdef double acc = 0.0
    cdef double c, a, b
    cdef int h
    res = np.empty(ell_max, dtype=np.float64)
    out = res
    for h in range(ell_max):
        c = ordered[h]
        resid = fmax(resid - c, 0.0)
        a = c + 1.0
        b = resid + 1.0
        acc += betaln(a, b) + _log_upper(1.0 / (m - h), a, b) - log(<double>(m - h - 1))
        out[h] = acc - resid * log(<double>(m - h - 1))
    return res


def log_block_evidence(const double[:] ordered, double nk, int ell, long m):
    cdef double resid = nk
    cdef double acc = 0.0
    cdef double c, a, b
    cdef int h
    for h in range(ell):
        c = ordered[h]
        resid = fmax(resid - c, 0.0)
        a = c + 1.0
        b = resid + 1.0
        acc += betaln(a, b) + _log_upper(1.0 / (m - h), a, b) - log(<double>(m - h - 1))
    return acc - resid * log(<double>(m - ell))

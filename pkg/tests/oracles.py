"""Independent oracles: direct numerical integration of the block evidence
under the flat prior on the stick-fraction box, with an ordered uniform prior
on mode locations."""
import itertools
import math

import numpy as np
from scipy import integrate

from condmodes.bayes import log_integrated_block


def _log_lik(eps, counts_at_modes, rest_count, m):
    """log of prod_h a_h^{c_h} * (rest / (m - ell))^{r} for stick fractions eps."""
    left = 1.0
    total = 0.0
    for e, c in zip(eps, counts_at_modes):
        a = e * left
        if c:
            if a <= 0:
                return -math.inf
            total += c * math.log(a)
        left *= 1.0 - e
    ell = len(eps)
    if rest_count:
        if left <= 0:
            return -math.inf
        total += rest_count * math.log(left / (m - ell))
    return total


def _box_log_density(m, ell):
    # Flat density on prod_h [1/(m-h+1), 1] (1-based h).
    return -sum(math.log(1 - 1 / (m - h)) for h in range(ell))


def _location_log_prior(m, ell):
    return -sum(math.log(m - h) for h in range(ell))


def _integral(counts_at_modes, rest_count, m, shift):
    ell = len(counts_at_modes)
    lows = [1.0 / (m - h) for h in range(ell)]
    f = lambda *eps: math.exp(_log_lik(eps[::-1], counts_at_modes, rest_count, m) - shift)  # noqa: E731
    opts = dict(epsabs=0.0, epsrel=1e-12)
    if ell == 1:
        val, _ = integrate.quad(lambda e: f(e), lows[0], 1.0, limit=200, **opts)
    elif ell == 2:
        # dblquad integrates the first argument innermost: (eps2, eps1).
        val, _ = integrate.dblquad(lambda e2, e1: f(e2, e1), lows[0], 1.0, lows[1], 1.0, **opts)
    else:
        raise NotImplementedError("oracle supports one or two modes")
    return val


def _shift(counts_at_modes, rest_count, m):
    # Likelihood at the unconstrained maximum, to keep the integrand near 1.
    n = sum(counts_at_modes) + rest_count
    probs = [c / n for c in counts_at_modes] + [rest_count / n]
    total = sum(c * math.log(p) for c, p in zip(counts_at_modes, probs) if c)
    if rest_count:
        total += rest_count * math.log(probs[-1] / (m - len(counts_at_modes)))
    return total


def dirac_evidence(counts, ell, m=None):
    """log evidence with modes fixed at the ell largest counts."""
    counts = sorted((float(c) for c in counts), reverse=True)
    m = len(counts) if m is None else m
    top = counts[:ell]
    rest = sum(counts[ell:])
    shift = _shift(top, rest, m) if sum(counts) else 0.0
    val = _integral(top, rest, m, shift)
    return math.log(val) + shift + _box_log_density(m, ell) + _location_log_prior(m, ell)


def location_terms(counts, ell):
    """log of every term of the evidence summed over ordered mode locations."""
    counts = [float(c) for c in counts]
    m = len(counts)
    out = []
    total = sum(counts)
    for loc in itertools.permutations(range(m), ell):
        at = [counts[i] for i in loc]
        rest = total - sum(at)
        shift = _shift(at, rest, m) if total else 0.0
        val = _integral(at, rest, m, shift)
        out.append(math.log(val) + shift + _box_log_density(m, ell) + _location_log_prior(m, ell) if val > 0 else -math.inf)
    return np.array(out)


def exact_structure_posterior(cells):
    """Normalized integrated likelihood of every (partition, modes) state for
    three binary variables and one class, keyed like the chain tallies."""
    cells = np.asarray(cells)
    parts = [((0,), (1,), (2,)), ((0, 1), (2,)), ((0, 2), (1,)), ((0,), (1, 2)), ((0, 1, 2),)]
    logp = {}
    for blocks in parts:
        choices = []
        for b in blocks:
            m = 2 ** len(b)
            codes = sum(cells[:, v] * 2**i for i, v in enumerate(b))
            counts = np.bincount(codes, minlength=m)
            choices.append([(e, log_integrated_block(counts, e)) for e in range(1, m)])
        for combo in itertools.product(*choices):
            key = (blocks, tuple((e,) for e, _ in combo))
            logp[key] = sum(v for _, v in combo)
    top = max(logp.values())
    z = sum(math.exp(v - top) for v in logp.values())
    return {k: math.exp(v - top) / z for k, v in logp.items()}

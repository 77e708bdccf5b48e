import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from condmodes import bayes
from condmodes.core import (
    BlockParams,
    BlockPartition,
    MixtureParams,
    ModelSpec,
    SufficientStats,
    count_stats,
    encode_blocks,
)
from condmodes.special import DomainError
from condmodes.sim import gen_cmm, well_specified_truth

from .oracles import dirac_evidence, location_terms


def _stats(counts_rows):
    """Single-block statistics from a (g, m) count table."""
    counts = np.asarray(counts_rows, dtype=np.float64)
    return SufficientStats(counts.sum(axis=1), (counts,))


def _spec_one_block(g, m_cards, ell):
    cards = tuple(m_cards)
    part = BlockPartition((tuple(range(len(cards))),))
    return ModelSpec(g, part, tuple((ell,) for _ in range(g)), cards)


# proportions

def test_proportions_symmetric_mean():
    rng = np.random.default_rng(1)
    draws = np.array([bayes.sample_proportions(np.zeros(2), rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, 0.5], atol=0.01)


def test_proportions_dirichlet_mean():
    nk = np.array([9.5, 0.5, 3.0])
    rng = np.random.default_rng(2)
    draws = np.array([bayes.sample_proportions(nk, rng) for _ in range(40_000)])
    expect = (0.5 + nk) / (1.5 + nk.sum())
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - expect) < 3 * se)


def test_proportions_single_class():
    assert bayes.sample_proportions(np.array([7.0]), np.random.default_rng(0)).tolist() == [1.0]


def test_proportions_valid():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        pi = bayes.sample_proportions(np.zeros(4), rng)
        assert np.all(pi > 0) and abs(pi.sum() - 1) < 1e-12


# mode locations

def test_mode_locations_examples():
    spec = _spec_one_block(1, (3,), 2)
    assert bayes.posterior_mode_locations(_stats([[1, 5, 3]]), spec) == [[(1, 2)]]
    spec = _spec_one_block(1, (4,), 1)
    assert bayes.posterior_mode_locations(_stats([[2, 2, 2, 2]]), spec) == [[(0,)]]
    spec = _spec_one_block(1, (4,), 3)
    locs = bayes.posterior_mode_locations(_stats([[4, 1, 7, 3]]), spec)[0][0]
    assert sorted(locs) == [0, 2, 3]


# mode masses

def test_block_probs_uniform_truncation_mean():
    spec = _spec_one_block(1, (2,), 1)
    stats = _stats([[0, 0]])
    rng = np.random.default_rng(4)
    eps = np.array([bayes.sample_block_probs(stats, spec, rng)[0][0].a[0] for _ in range(100_000)])
    assert eps.min() >= 0.5
    assert abs(eps.mean() - 0.75) < 0.005


@pytest.mark.slow
def test_block_probs_invariants_random():
    rng = np.random.default_rng(5)
    for _ in range(100_000):
        m = int(rng.integers(2, 10))
        ell = int(rng.integers(1, m))
        counts = rng.integers(0, 30, size=m) * (rng.random(m) < 0.7)
        bp = bayes.sample_block_probs(_stats([counts]), _spec_one_block(1, (m,), ell), rng)[0][0]
        bp.check()


def _rejection_oracle(counts, ell, m, size, rng):
    """Untruncated stick-fraction Betas, rejected outside the box, then put in
    canonical (decreasing mass) order."""
    order = np.argsort(-np.asarray(counts, dtype=float), kind="stable")
    ordered = np.asarray(counts, dtype=float)[order]
    n = ordered.sum()
    resid = n - np.cumsum(ordered)
    out = []
    while len(out) < size:
        eps = np.array([rng.beta(ordered[h] + 1, resid[h] + 1) for h in range(ell)])
        if np.any(eps < 1.0 / (m - np.arange(ell))):
            continue
        mode_mass, rest = bayes.masses_from_fractions(eps)
        bp = BlockParams.from_masses([int(c) for c in order[:ell]], mode_mass, rest, m)
        out.append(bp.a)
    return np.array(out)


@pytest.mark.parametrize("counts,ell", [
    ((0, 0), 1), ((3, 1, 0), 1), ((2, 2, 1), 2), ((0, 0, 0, 0), 2),
    ((6, 5, 1, 0), 2), ((1, 1, 1, 1), 1), ((9, 0, 0, 2), 2),
])
def test_block_probs_match_rejection(counts, ell):
    m = len(counts)
    spec = _spec_one_block(1, (m,), ell)
    stats = _stats([counts])
    size = 20_000
    rng = np.random.default_rng(6)
    got = np.array([bayes.sample_block_probs(stats, spec, rng)[0][0].a for _ in range(size)])
    ref = _rejection_oracle(counts, ell, m, size, np.random.default_rng(7))
    se = np.sqrt(got.var(axis=0, ddof=1) / size + ref.var(axis=0, ddof=1) / size)
    assert np.all(np.abs(got.mean(axis=0) - ref.mean(axis=0)) <= 3 * se + 1e-12)
    se2 = np.sqrt((got**2).var(axis=0, ddof=1) / size + (ref**2).var(axis=0, ddof=1) / size)
    assert np.all(np.abs((got**2).mean(axis=0) - (ref**2).mean(axis=0)) <= 3 * se2 + 1e-12)


def test_block_probs_deterministic():
    spec, _ = well_specified_truth()
    data, labels = gen_cmm(*well_specified_truth(), 200, seed=3)
    stats = count_stats(encode_blocks(data, spec.partition), spec.g, labels=labels)
    a = bayes.sample_params(stats, spec, np.random.default_rng(9))
    b = bayes.sample_params(stats, spec, np.random.default_rng(9))
    assert a == b
    a.check(spec)


# labels

def test_labels_identical_components():
    bp = BlockParams((0,), np.array([0.5, 0.5]), 3)
    params = MixtureParams(np.array([0.25, 0.25, 0.25, 0.25]), tuple((bp,) for _ in range(4)))
    codes = np.zeros((40_000, 1), dtype=np.int64)
    z = bayes.sample_labels(codes, params, np.random.default_rng(0))
    freq = np.bincount(z, minlength=4) / z.size
    assert np.all(np.abs(freq - 0.25) < 4 * math.sqrt(0.25 * 0.75 / z.size))


def test_labels_degenerate_proportions():
    bp = BlockParams((0,), np.array([0.5, 0.5]), 3)
    other = BlockParams((1,), np.array([0.9, 0.1]), 3)
    params = MixtureParams(np.array([0.0, 1.0]), ((bp,), (other,)))
    codes = np.array([[0], [1], [2]] * 50)
    with np.errstate(divide="ignore"):
        z = bayes.sample_labels(codes, params, np.random.default_rng(0))
    assert np.all(z == 1)


def test_labels_deterministic():
    spec, params = well_specified_truth()
    data, _ = gen_cmm(spec, params, 300, seed=1)
    codes = encode_blocks(data, spec.partition).codes
    z1 = bayes.sample_labels(codes, params, np.random.default_rng(4))
    z2 = bayes.sample_labels(codes, params, np.random.default_rng(4))
    assert np.array_equal(z1, z2)


# integrated block likelihood

def test_integrated_block_single_mode_all_pairs():
    # Every count pair with n <= 50 on a binary block, against quadrature.
    for n1 in range(51):
        for n2 in range(min(n1, 50 - n1) + 1):
            got = bayes.log_integrated_block((n1, n2), 1)
            ref = dirac_evidence((n1, n2), 1)
            assert abs(got - ref) <= 1e-8 * abs(ref) + 1e-12, (n1, n2)


def test_integrated_block_zero_counts_closed_form():
    # m=3, l=1: location prior 1/3 times box density times box volume.
    got = bayes.log_integrated_block((0, 0, 0), 1)
    assert abs(got - math.log(1 / 3)) < 1e-12
    assert abs(got - dirac_evidence((0, 0, 0), 1)) < 1e-10


@pytest.mark.parametrize("counts,ell", [
    ((7, 3, 0), 1), ((5, 2, 1), 2), ((9, 4, 1, 0), 2), ((3, 3, 1, 1), 2), ((12, 0, 5, 2), 1),
    ((0, 0, 0, 0), 2), ((20, 1, 0, 0), 2),
])
def test_integrated_block_matches_quadrature(counts, ell):
    got = bayes.log_integrated_block(counts, ell)
    ref = dirac_evidence(counts, ell)
    assert abs(got - ref) <= 1e-8 * abs(ref) + 1e-12


@pytest.mark.parametrize("counts", [(9, 4, 1, 0), (5, 2, 1), (6, 6, 0, 1)])
def test_dirac_term_is_largest_location_term(counts):
    terms = location_terms(counts, 2)
    dirac = bayes.log_integrated_block(counts, 2)
    assert abs(terms.max() - dirac) < 1e-8 * abs(dirac)
    gap = logsumexp(terms) - dirac
    assert -1e-10 <= gap <= math.log(terms.size)


def test_integrated_block_monotone_sanity():
    counts = (50, 1, 1, 1)
    lo, hi = bayes.log_integrated_block(counts, 1), bayes.log_integrated_block(counts, 3)
    assert lo > hi
    assert dirac_evidence(counts, 1) > -math.inf


@pytest.mark.parametrize("ell", [0, 3, -1])
def test_integrated_block_domain(ell):
    with pytest.raises(DomainError):
        bayes.log_integrated_block((1, 2, 3), ell)


def test_integrated_path_matches_single():
    counts = np.array([7, 0, 3, 1, 9, 2], dtype=float)
    path = bayes.log_integrated_path(counts, 5)
    single = [bayes.log_integrated_block(counts, ell) for ell in range(1, 6)]
    np.testing.assert_allclose(path, single, rtol=1e-13)


@given(st.lists(st.integers(0, 40), min_size=3, max_size=9), st.integers(1, 7), st.randoms())
def test_integrated_block_exchangeable_below_top(counts, ell, rnd):
    m = len(counts)
    ell = min(ell, m - 1)
    ordered = sorted(counts, reverse=True)
    tail = ordered[ell:]
    rnd.shuffle(tail)
    top = ordered[:ell]
    shuffled = top + tail
    rnd.shuffle(shuffled)  # positions never matter, only the sorted values
    assert bayes.log_integrated_block(counts, ell) == pytest.approx(
        bayes.log_integrated_block(shuffled, ell), rel=1e-13, abs=1e-13)


# complete-data integrated likelihood

def test_integrated_complete_one_block():
    spec = _spec_one_block(1, (3,), 2)
    stats = _stats([[4, 1, 2]])
    assert bayes.log_integrated_complete(stats, spec) == bayes.log_integrated_block((4, 1, 2), 2)


@given(st.integers(1, 3), st.integers(0, 2**31))
def test_integrated_complete_additive(g, seed):
    rng = np.random.default_rng(seed)
    cards = (2, 3, 2, 2)
    part = BlockPartition(((0, 1), (2,), (3,)))
    sizes = (6, 2, 2)
    modes = tuple(tuple(int(rng.integers(1, s)) for s in sizes) for _ in range(g))
    spec = ModelSpec(g, part, modes, cards)
    counts = tuple(rng.integers(0, 10, size=(g, s)).astype(float) for s in sizes)
    stats = SufficientStats(counts[0].sum(axis=1), counts)
    total = sum(bayes.log_integrated_block(counts[j][k], modes[k][j]) for k in range(g) for j in range(3))
    assert bayes.log_integrated_complete(stats, spec) == pytest.approx(total, rel=1e-14)


def test_integrated_complete_tiny_instance():
    # Two binary variables, four individuals, one class, singleton blocks.
    cells = np.array([[0, 1], [0, 0], [1, 1], [0, 1]])
    spec = ModelSpec(1, BlockPartition(((0,), (1,))), ((1, 1),), (2, 2))
    stats = SufficientStats(np.array([4.0]), tuple(
        np.bincount(cells[:, b], minlength=2).astype(float)[None, :] for b in range(2)))
    ref = dirac_evidence((3, 1), 1) + dirac_evidence((1, 3), 1)
    assert abs(bayes.log_integrated_complete(stats, spec) - ref) < 1e-10


# bic and label priors

def test_bic_examples():
    assert bayes.bic(-12.5, 0, 100) == -12.5
    assert bayes.bic(-12.5, 7, 1) == -12.5
    assert bayes.bic(-10.0, 4, 100) == pytest.approx(-10.0 - 2 * math.log(100))
    spec = ModelSpec(2, BlockPartition(((0, 1), (2, 3), (4, 5))), ((2, 2, 2), (2, 2, 2)), (3,) * 6)
    assert spec.n_params == 13


def test_label_prior_conventions():
    assert bayes.log_label_prior([2, 2], "uniform") == pytest.approx(-4 * math.log(2))
    # Jeffreys: one class with one label marginalizes to 1/2 for g=2.
    assert bayes.log_label_prior([1, 0], "jeffreys") == pytest.approx(math.log(0.5))
    with pytest.raises(ValueError):
        bayes.log_label_prior([1, 1], "flat")

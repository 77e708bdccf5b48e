import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condmodes.core import BlockParams, BlockPartition, CategoricalDataset, MixtureParams, ModelSpec, all_cells, encode_blocks
from condmodes.likelihood import (
    cell_log_pmf,
    complete_loglik,
    component_logpdf,
    mixture_logpdf,
    observed_loglik,
    summaries,
)
from condmodes.sim import well_specified_truth


def _codes(spec, rows):
    ds = CategoricalDataset.from_codes(np.asarray(rows), spec.cards)
    return encode_blocks(ds, spec.partition).codes


def test_uniform_binary_block():
    spec = ModelSpec(1, BlockPartition.singletons(1), ((1,),), (2,))
    params = MixtureParams(np.ones(1), ((BlockParams((0,), np.array([0.5, 0.5]), 2),),))
    params.check(spec)
    assert math.exp(component_logpdf(np.array([1]), params, 0)) == pytest.approx(0.5)


def test_well_specified_mode_and_non_mode_cells():
    spec, params = well_specified_truth()
    # Class 1 modes are crossings 0 and 1: cells (0,0) and (1,0) of each pair.
    at_modes = _codes(spec, [[0, 0, 1, 0, 0, 0]])[0]
    assert math.exp(component_logpdf(at_modes, params, 0)) == pytest.approx(0.4**3, rel=1e-14)
    one_off = _codes(spec, [[2, 2, 1, 0, 0, 0]])[0]
    assert math.exp(component_logpdf(one_off, params, 0)) == pytest.approx(0.4**2 * 0.2 / 7, rel=1e-14)
    total = np.exp(cell_log_pmf(params, spec)).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


def test_mixture_is_explicit_two_term_sum():
    spec, params = well_specified_truth()
    codes = _codes(spec, all_cells(spec.cards)[::37])
    explicit = np.log(0.5 * np.exp(component_logpdf(codes, params, 0)) + 0.5 * np.exp(component_logpdf(codes, params, 1)))
    np.testing.assert_allclose(mixture_logpdf(codes, params), explicit, rtol=1e-13)


def test_mixture_collapse_and_single_component():
    bp = BlockParams((1,), np.array([0.7, 0.3]), 3)
    p1 = MixtureParams(np.ones(1), ((bp,),))
    p2 = MixtureParams(np.array([0.5, 0.5]), ((bp,), (bp,)))
    codes = np.array([[0], [1], [2]])
    np.testing.assert_allclose(mixture_logpdf(codes, p1), component_logpdf(codes, p1, 0), rtol=1e-15)
    np.testing.assert_allclose(mixture_logpdf(codes, p2), component_logpdf(codes, p1, 0), rtol=1e-15)


def test_loglik_trivial_cases():
    spec, params = well_specified_truth()
    empty = np.zeros((0, 3), dtype=np.int64)
    assert observed_loglik(empty, params) == 0.0
    assert complete_loglik(empty, np.zeros(0, dtype=int), params) == 0.0
    one = _codes(spec, [[0, 1, 2, 0, 1, 2]])
    assert observed_loglik(one, params) == pytest.approx(mixture_logpdf(one, params)[0])
    many = np.repeat(one, 7, axis=0)
    assert observed_loglik(many, params) == pytest.approx(7 * observed_loglik(one, params), rel=1e-14)
    z = np.zeros(7, dtype=int)
    assert complete_loglik(many, z, params) == pytest.approx(7 * (math.log(0.5) + component_logpdf(one[0], params, 0)))


def test_summaries():
    spec, params = well_specified_truth()
    kappa, rho = summaries(params, spec)
    np.testing.assert_allclose(kappa, 2 / 8)
    np.testing.assert_allclose(rho, 0.8)
    s = ModelSpec(1, BlockPartition.singletons(1), ((2,),), (3,))
    p = MixtureParams(np.ones(1), ((BlockParams((0, 1), np.array([0.5, 0.3, 0.2]), 3),),))
    assert summaries(p, s)[0][0, 0] == 1.0
    # A 2-mode variable with 4 modalities has complexity 2/3.
    s4 = ModelSpec(1, BlockPartition.singletons(1), ((2,),), (4,))
    p4 = MixtureParams(np.ones(1), ((BlockParams((0, 1), np.array([0.5, 0.3, 0.2]), 4),),))
    assert summaries(p4, s4)[0][0, 0] == pytest.approx(0.67, abs=0.005)


@st.composite
def random_model(draw):
    cards = tuple(draw(st.lists(st.integers(2, 4), min_size=1, max_size=4)))
    perm = draw(st.permutations(range(len(cards))))
    cuts = sorted(set(draw(st.lists(st.integers(1, len(cards) - 1), max_size=3)))) if len(cards) > 1 else []
    bounds = [0] + cuts + [len(cards)]
    partition = BlockPartition(tuple(tuple(perm[a:b]) for a, b in zip(bounds, bounds[1:])))
    g = draw(st.integers(1, 3))
    sizes = partition.block_sizes(cards)
    rng = np.random.default_rng(draw(st.integers(0, 2**31)))
    rows = []
    modes = []
    for _ in range(g):
        row, mrow = [], []
        for m in sizes:
            ell = int(rng.integers(1, m))
            probs = np.sort(rng.dirichlet(np.ones(ell + 1)))[::-1]
            # Keep the truncated-simplex constraint by lifting small modes.
            level = probs[-1] / (m - ell)
            mass = np.maximum(probs[:-1], level)
            a = np.append(mass, probs[-1]) / (mass.sum() + probs[-1])
            delta = rng.choice(m, size=ell, replace=False)
            row.append(BlockParams.from_masses(list(delta), a[:-1], a[-1], m))
            mrow.append(ell)
        rows.append(tuple(row))
        modes.append(tuple(mrow))
    spec = ModelSpec(g, partition, tuple(modes), cards)
    return spec, MixtureParams(rng.dirichlet(np.ones(g)), tuple(rows))


@given(random_model())
def test_pmf_sums_to_one(model):
    spec, params = model
    for row in params.blocks:
        for bp in row:
            assert bp.alpha().sum() == pytest.approx(1.0, abs=1e-12)
    assert np.exp(cell_log_pmf(params, spec)).sum() == pytest.approx(1.0, abs=1e-10)
    for k in range(spec.g):
        codes = encode_blocks(CategoricalDataset.from_codes(all_cells(spec.cards), spec.cards), spec.partition).codes
        assert np.exp(component_logpdf(codes, params, k)).sum() == pytest.approx(1.0, abs=1e-10)


@given(st.lists(st.integers(2, 4), min_size=1, max_size=4), st.integers(0, 2**31))
def test_cim_equivalence(cards, seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec.cim(2, cards)
    pi = rng.dirichlet(np.ones(2))
    alphas = [[rng.dirichlet(np.ones(m)) for m in cards] for _ in range(2)]
    blocks = []
    for k in range(2):
        row = []
        for al in alphas[k]:
            last = int(np.argmin(al))
            keep = [h for h in range(al.size) if h != last]
            row.append(BlockParams.from_masses(keep, al[keep], al[last], al.size))
        blocks.append(tuple(row))
    params = MixtureParams(pi, tuple(blocks))
    cells = all_cells(cards)
    lc = np.log(sum(pi[k] * np.prod([alphas[k][b][cells[:, b]] for b in range(len(cards))], axis=0) for k in range(2)))
    np.testing.assert_allclose(cell_log_pmf(params, spec), lc, rtol=1e-12)

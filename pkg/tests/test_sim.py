import numpy as np
import pytest
from scipy import stats

from condmodes.core import MixtureParams, all_cells
from condmodes.likelihood import cell_log_pmf
from condmodes.sim import (
    gen_cmm,
    gen_misspecified,
    gen_modes_multinomial,
    misspecified_log_pmf,
    modes_multinomial_probs,
    well_specified_truth,
)


def _cell_index(cells, cards):
    idx = np.zeros(len(cells), dtype=np.int64)
    for b in range(len(cards)):
        idx = idx * cards[b] + cells[:, b]
    return idx


def _gof_pvalue(cells, cards, log_pmf):
    """Chi-square goodness of fit of ``cells`` against a pmf in all_cells order,
    pooling cells with small expected counts."""
    n = len(cells)
    observed = np.bincount(_cell_index(cells, cards), minlength=int(np.prod(cards)))
    expected = n * np.exp(log_pmf)
    small = expected < 5
    obs = np.append(observed[~small], observed[small].sum())
    exp = np.append(expected[~small], expected[small].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    return stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue


def test_all_cells_order_matches_index():
    cards = (3, 2, 4)
    cells = all_cells(cards)
    np.testing.assert_array_equal(_cell_index(cells, cards), np.arange(24))


def test_modes_multinomial_frequencies():
    probs = modes_multinomial_probs(9, 0.3)
    np.testing.assert_allclose(probs[3:], 0.1 / 6)
    x = gen_modes_multinomial(100_000, 9, 0.3, seed=0)
    freq = np.bincount(x, minlength=9) / x.size
    assert np.all(np.abs(freq - probs) < 0.005)
    assert stats.chisquare(np.bincount(x, minlength=9), 1e5 * probs).pvalue > 0.01


@pytest.mark.parametrize("s,r", [(9, 0.1), (4, 0.25), (3, 0.2), (9, 0.34), (9, 0.0)])
def test_modes_multinomial_preconditions(s, r):
    with pytest.raises(ValueError):
        modes_multinomial_probs(s, r)


def test_modes_multinomial_deterministic():
    assert np.array_equal(gen_modes_multinomial(50, 9, 0.3, seed=3), gen_modes_multinomial(50, 9, 0.3, seed=3))


def test_cmm_mode_frequencies():
    spec, params = well_specified_truth()
    data, labels = gen_cmm(spec, params, 100_000, seed=1)
    for k, modes in enumerate(((0, 1), (7, 8))):
        sub = data.cells[labels == k]
        for j in range(3):
            codes = sub[:, 2 * j] + 3 * sub[:, 2 * j + 1]
            freq = np.bincount(codes, minlength=9) / len(codes)
            np.testing.assert_allclose(freq[list(modes)], 0.4, atol=0.01)


def test_cmm_goodness_of_fit():
    spec, params = well_specified_truth()
    data, _ = gen_cmm(spec, params, 100_000, seed=2)
    assert _gof_pvalue(data.cells, spec.cards, cell_log_pmf(params, spec)) > 0.01


def test_cmm_degenerate_proportions():
    spec, params = well_specified_truth()
    one = MixtureParams(np.array([1.0, 0.0]), params.blocks)
    _, labels = gen_cmm(spec, one, 500, seed=0)
    assert np.all(labels == 0)


def test_cmm_deterministic():
    spec, params = well_specified_truth()
    a, la = gen_cmm(spec, params, 100, seed=5)
    b, lb = gen_cmm(spec, params, 100, seed=5)
    assert a == b and np.array_equal(la, lb)
    assert a.names == tuple(f"x{i}" for i in range(1, 7))


def test_misspecified_lambda_zero_uniform():
    data, _ = gen_misspecified(100_000, 0.0, seed=0)
    lp = misspecified_log_pmf(0.0)
    np.testing.assert_allclose(lp, -6 * np.log(3))
    assert _gof_pvalue(data.cells, (3,) * 6, lp) > 0.01


def test_misspecified_lambda_one_copies():
    data, labels = gen_misspecified(2000, 1.0, seed=1)
    c = data.cells
    one, two = labels == 0, labels == 1
    for a, b in ((0, 1), (2, 3), (4, 5)):
        assert np.all(c[one, a] == c[one, b])
    for a, b in ((1, 2), (3, 4)):
        assert np.all(c[two, a] == c[two, b])


def test_misspecified_pair_agreement():
    data, labels = gen_misspecified(100_000, 0.5, seed=2)
    sub = data.cells[labels == 0]
    assert abs(np.mean(sub[:, 0] == sub[:, 1]) - 2 / 3) < 0.01


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.8])
def test_misspecified_goodness_of_fit(lam):
    data, _ = gen_misspecified(100_000, lam, seed=3)
    lp = misspecified_log_pmf(lam)
    assert abs(np.exp(lp).sum() - 1) < 1e-12
    assert _gof_pvalue(data.cells, (3,) * 6, lp) > 0.01


def test_misspecified_lambda_range():
    with pytest.raises(ValueError):
        gen_misspecified(10, 1.5)
    with pytest.raises(ValueError):
        misspecified_log_pmf(-0.1)


def test_misspecified_deterministic():
    a, la = gen_misspecified(100, 0.8, seed=9)
    b, lb = gen_misspecified(100, 0.8, seed=9)
    assert a == b and np.array_equal(la, lb)

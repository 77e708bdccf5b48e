"""Model comparison and cluster diagnostics: KL divergence between fitted
models, confusion tables, per-class Cramer's V, a bootstrap test of
conditional independence, and a generic identifiability check."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.stats.contingency import crosstab

from ._parallel import parallel_map
from .core import CategoricalDataset, MixtureParams, ModelSpec
from .likelihood import cell_log_pmf

EXHAUSTIVE_MAX_CELLS = 10**6
MC_DRAWS = 10**5


@dataclass(frozen=True)
class KLResult:
    value: float
    stderr: float
    method: str

    def __float__(self):
        return self.value


def kl_from_log_pmf(log_p: np.ndarray, log_q: np.ndarray) -> float:
    """sum p log(p / q) over cells given both log-pmfs on the same cells."""
    log_p = np.asarray(log_p, dtype=np.float64)
    log_q = np.asarray(log_q, dtype=np.float64)
    p = np.exp(log_p)
    keep = p > 0
    return float(max(np.sum(p[keep] * (log_p[keep] - log_q[keep])), 0.0))


def kl_divergence(params_p: MixtureParams, spec_p: ModelSpec, params_q: MixtureParams,
                  spec_q: ModelSpec, seed=None, draws: int = MC_DRAWS,
                  max_cells: int = EXHAUSTIVE_MAX_CELLS) -> KLResult:
    """KL(p || q) between two models on the same variables.

    Summed over every cell when there are at most ``max_cells`` of them,
    otherwise estimated from ``draws`` samples of p with its standard error.
    """
    if spec_p.cards != spec_q.cards:
        raise ValueError("models are defined on different variables or modalities")
    if math.prod(spec_p.cards) <= max_cells:
        return KLResult(kl_from_log_pmf(cell_log_pmf(params_p, spec_p), cell_log_pmf(params_q, spec_q)),
                        0.0, "exhaustive")
    from .sim import gen_cmm

    sample, _ = gen_cmm(spec_p, params_p, draws, seed)
    diff = cell_log_pmf(params_p, spec_p, sample.cells) - cell_log_pmf(params_q, spec_q, sample.cells)
    return KLResult(float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(draws)), "monte-carlo")


def confusion(labels_a, labels_b) -> np.ndarray:
    """Cross-tabulation of two labelings, rows for ``labels_a``. Rows and
    columns span 0..max label; no alignment is attempted."""
    a = np.asarray(labels_a, dtype=np.int64)
    b = np.asarray(labels_b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("labelings differ in length")
    if a.size == 0:
        return np.zeros((0, 0), dtype=np.int64)
    return crosstab(a, b, levels=(np.arange(a.max() + 1), np.arange(b.max() + 1))).count


def cramers_v(x, y) -> float:
    """sqrt(chi2 / (n min(r - 1, c - 1))) on the table of observed levels;
    0 when either variable shows a single level."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.size == 0:
        return 0.0
    table = crosstab(x, y).count.astype(np.float64)
    r, c = table.shape
    denom = min(r - 1, c - 1)
    if denom <= 0:
        return 0.0
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    chi2 = float(((table - expected) ** 2 / expected).sum())
    return float(min(math.sqrt(chi2 / (n * denom)), 1.0))


def cramers_v_matrix(cells: np.ndarray) -> np.ndarray:
    cells = np.asarray(cells)
    b = cells.shape[1]
    out = np.eye(b)
    for u, v in itertools.combinations(range(b), 2):
        out[u, v] = out[v, u] = cramers_v(cells[:, u], cells[:, v])
    return out


def cramers_v_by_class(dataset: CategoricalDataset, labels, g: int | None = None) -> list[np.ndarray]:
    """One B x B Cramer's V matrix per class, on that class's individuals."""
    labels = np.asarray(labels, dtype=np.int64)
    g = int(labels.max()) + 1 if g is None else g
    return [cramers_v_matrix(dataset.cells[labels == k]) for k in range(g)]


def max_conditional_v(cells: np.ndarray, labels: np.ndarray, g: int) -> float:
    best = 0.0
    for k in range(g):
        sub = cells[labels == k]
        for u, v in itertools.combinations(range(cells.shape[1]), 2):
            best = max(best, cramers_v(sub[:, u], sub[:, v]))
    return best


def class_marginals(dataset: CategoricalDataset, labels, g: int) -> list[list[np.ndarray]]:
    """Per class and variable, the empirical modality frequencies."""
    labels = np.asarray(labels, dtype=np.int64)
    out = []
    for k in range(g):
        sub = dataset.cells[labels == k]
        row = []
        for b, m in enumerate(dataset.cards):
            counts = np.bincount(sub[:, b], minlength=m).astype(np.float64)
            row.append(counts / counts.sum() if counts.sum() > 0 else np.full(m, 1.0 / m))
        out.append(row)
    return out


def _bootstrap_stat(seed_seq, labels, marginals, g):
    rng = np.random.default_rng(seed_seq)
    n = labels.size
    cells = np.empty((n, len(marginals[0])), dtype=np.int64)
    for k in range(g):
        idx = np.flatnonzero(labels == k)
        for b, probs in enumerate(marginals[k]):
            cells[idx, b] = rng.choice(probs.size, size=idx.size, p=probs)
    return max_conditional_v(cells, labels, g)


@dataclass(frozen=True)
class BootstrapResult:
    statistic: float
    p_value: float
    null: np.ndarray


def bootstrap_independence_test(dataset: CategoricalDataset, labels, reps: int = 1000, seed=None,
                                g: int | None = None, threads: int = 1) -> BootstrapResult:
    """Test that every Cramer's V is zero within every class.

    The statistic is the largest within-class V over all variable pairs.
    Null datasets keep the labels and draw each variable independently from
    its within-class empirical marginal, the conditional-independence fit.
    The p-value is the fraction of null statistics at least as large as the
    observed one.
    """
    if reps < 1:
        raise ValueError("the bootstrap needs at least one replicate")
    labels = np.asarray(labels, dtype=np.int64)
    g = int(labels.max()) + 1 if g is None else g
    observed = max_conditional_v(dataset.cells, labels, g)
    marginals = class_marginals(dataset, labels, g)
    streams = np.random.SeedSequence(seed).spawn(reps)
    null = np.array(parallel_map(partial(_bootstrap_stat, labels=labels, marginals=marginals, g=g),
                                 streams, threads))
    # Small slack so exact ties with the observed statistic count as ties.
    p_value = float(np.mean(null >= observed - 1e-12))
    return BootstrapResult(observed, p_value, null)


@dataclass(frozen=True)
class IdentifiabilityResult:
    status: str
    witness: tuple[tuple[int, ...], ...] | None
    message: str

    @property
    def identifiable(self) -> bool:
        return self.status == "identifiable"


def _tripartitions(d: int):
    """Unordered partitions of range(d) into three nonempty sets."""
    for assign in itertools.product(range(3), repeat=d - 1):
        labels = (0,) + assign
        # Canonical: first appearance order of the group labels is 0, 1, 2.
        seen = []
        for x in labels:
            if x not in seen:
                seen.append(x)
        if seen != [0, 1, 2]:
            continue
        yield tuple(tuple(j for j in range(d) if labels[j] == s) for s in range(3))


def identifiability_check(spec: ModelSpec) -> IdentifiabilityResult:
    """Sufficient condition for generic identifiability up to label swapping.

    With ``xi_j = min_k ell_kj + 1`` and ``gamma_S`` the product of ``xi`` over
    a set S of blocks, the model is generically identifiable if some split of
    the blocks into three nonempty sets has
    ``sum_S min(g, gamma_S) >= 2g + 2``. Otherwise the answer is unknown.
    """
    d, g = spec.d, spec.g
    if d < 3:
        return IdentifiabilityResult("unknown", None, f"need at least three blocks, got {d}")
    xi = spec.modes_array().min(axis=0) + 1
    target = 2 * g + 2
    for parts in _tripartitions(d):
        score = sum(min(g, int(np.prod(xi[list(s)]))) for s in parts)
        if score >= target:
            witness = tuple(tuple(j + 1 for j in s) for s in parts)
            return IdentifiabilityResult("identifiable", witness,
                                         f"block split {witness} reaches {score} >= {target}")
    return IdentifiabilityResult("unknown", None, f"no three-way block split reaches {target}")

"""Generators for the three simulation designs: a single variable with three
equal modes, data drawn from a known conditional modes model, and a
two-class model whose coupled variable pairs differ between classes."""
from __future__ import annotations

import numpy as np

from .core import (
    BlockParams,
    BlockPartition,
    CategoricalDataset,
    MixtureParams,
    ModelSpec,
    all_cells,
    decode_block,
)


def _names(n_vars: int) -> tuple[str, ...]:
    return tuple(f"x{b + 1}" for b in range(n_vars))


def _levels(cards) -> tuple[tuple[str, ...], ...]:
    return tuple(tuple(str(h + 1) for h in range(m)) for m in cards)


def modes_multinomial_probs(s: int, r: float) -> np.ndarray:
    """Probabilities (r, r, r, q, ..., q) with q = (1 - 3r) / (s - 3)."""
    if s <= 3:
        raise ValueError(f"need more than three categories, got s={s}")
    if not 0 < 3 * r < 1:
        raise ValueError(f"need 0 < 3r < 1, got r={r}")
    q = (1 - 3 * r) / (s - 3)
    if not r > q:
        raise ValueError(f"modes are not modal: r={r} <= (1 - 3r)/(s - 3)={q}")
    return np.array([r] * 3 + [q] * (s - 3))


def gen_modes_multinomial(n: int, s: int, r: float, seed=None) -> np.ndarray:
    """``n`` i.i.d. draws (category indices) with three modes of mass ``r``."""
    probs = modes_multinomial_probs(s, r)
    rng = np.random.default_rng(seed)
    return rng.choice(s, size=n, p=probs)


def well_specified_truth() -> tuple[ModelSpec, MixtureParams]:
    """Two classes, six 3-level variables in blocks {1,2}, {3,4}, {5,6}, two
    modes of mass 0.4 per block; the remaining 0.2 is spread over the other
    seven crossings. Class 1 puts its modes on crossings 0 and 1 of every
    block, class 2 on crossings 7 and 8."""
    cards = (3,) * 6
    partition = BlockPartition(((0, 1), (2, 3), (4, 5)))
    spec = ModelSpec(2, partition, ((2, 2, 2), (2, 2, 2)), cards)
    a = np.array([0.4, 0.4, 0.2])
    rows = []
    for delta in ((0, 1), (7, 8)):
        rows.append(tuple(BlockParams(delta, a.copy(), 9) for _ in range(3)))
    return spec, MixtureParams(np.array([0.5, 0.5]), tuple(rows))


def gen_cmm(spec: ModelSpec, params: MixtureParams, n: int, seed=None,
            names=None) -> tuple[CategoricalDataset, np.ndarray]:
    """Draw class labels from pi, then each block crossing from the class's
    expanded distribution, then decode crossings to variables."""
    rng = np.random.default_rng(seed)
    labels = rng.choice(spec.g, size=n, p=params.pi)
    cells = np.empty((n, len(spec.cards)), dtype=np.int64)
    for j, block in enumerate(spec.partition.blocks):
        codes = np.empty(n, dtype=np.int64)
        for k in range(spec.g):
            idx = np.flatnonzero(labels == k)
            alpha = params.blocks[k][j].alpha()
            codes[idx] = rng.choice(alpha.size, size=idx.size, p=alpha / alpha.sum())
        for v, col in decode_block(codes, block, spec.cards).items():
            cells[:, v] = col
    names = tuple(names) if names is not None else _names(len(spec.cards))
    return CategoricalDataset(names, _levels(spec.cards), cells), labels


#: Coupled pairs per class (0-based) of the misspecified design; variables
#: outside every pair are independent uniform.
MISSPEC_PAIRS = (((0, 1), (2, 3), (4, 5)), ((1, 2), (3, 4)))
MISSPEC_PI = (0.5, 0.5)
MISSPEC_LEVELS = 3
MISSPEC_VARS = 6


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def gen_misspecified(n: int, lam: float, seed=None) -> tuple[CategoricalDataset, np.ndarray]:
    """Per coupled pair, the first variable is uniform and the second copies
    it with probability ``lam``, else is drawn uniform independently."""
    _check_lambda(lam)
    rng = np.random.default_rng(seed)
    m = MISSPEC_LEVELS
    labels = rng.choice(2, size=n, p=MISSPEC_PI)
    cells = rng.integers(0, m, size=(n, MISSPEC_VARS))
    for k, pairs in enumerate(MISSPEC_PAIRS):
        idx = np.flatnonzero(labels == k)
        for a, b in pairs:
            copy = rng.random(idx.size) < lam
            cells[idx[copy], b] = cells[idx[copy], a]
    cards = (m,) * MISSPEC_VARS
    return CategoricalDataset(_names(MISSPEC_VARS), _levels(cards), cells), labels


def misspecified_log_pmf(lam: float, cells: np.ndarray | None = None) -> np.ndarray:
    """Exact log-probability of the misspecified design at each row of
    ``cells`` (default: all 3^6 cells in :func:`all_cells` order)."""
    _check_lambda(lam)
    m = MISSPEC_LEVELS
    if cells is None:
        cells = all_cells((m,) * MISSPEC_VARS)
    cells = np.asarray(cells)
    total = np.zeros(cells.shape[0])
    for k, pairs in enumerate(MISSPEC_PAIRS):
        prob = np.full(cells.shape[0], float(MISSPEC_PI[k]))
        paired = set()
        for a, b in pairs:
            same = cells[:, a] == cells[:, b]
            prob *= (1.0 / m) * (lam * same + (1 - lam) / m)
            paired.update((a, b))
        prob *= (1.0 / m) ** (MISSPEC_VARS - len(paired))
        total += prob
    with np.errstate(divide="ignore"):
        return np.log(total)


"""Maximum-likelihood estimation for a fixed model structure via EM."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.special import logsumexp

from ._parallel import parallel_map
from .core import (
    MASS_FLOOR,
    BlockCodes,
    BlockParams,
    BlockPartition,
    MixtureParams,
    ModelSpec,
    StructureError,
    SufficientStats,
    count_stats,
)
from .likelihood import joint_log_matrix

DEFAULT_STARTS = 25
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500
_EMPTY_CLASS = 1e-10
_MAX_REDRAWS = 50


class DegenerateFit(ArithmeticError):
    """A class received (numerically) zero weight."""


class EstimationError(RuntimeError):
    """Every EM start degenerated."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class EMResult:
    params: MixtureParams
    loglik: float
    resp: np.ndarray
    spec: ModelSpec
    n_iter: int = 0
    start: int = 0
    trace: list[float] = field(default_factory=list)
    redraws: int = 0

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.resp, axis=1)


def e_step(data: BlockCodes, params: MixtureParams) -> tuple[np.ndarray, float]:
    """Responsibilities t_ik and the observed-data log-likelihood."""
    joint = joint_log_matrix(data.codes, params)
    norm = logsumexp(joint, axis=1, keepdims=True)
    return np.exp(joint - norm), float(norm.sum())


def fit_block(counts_k: np.ndarray, nk: float, ell: int, order: np.ndarray | None = None) -> BlockParams:
    """Maximum-likelihood block parameters from one class's crossing counts.

    The non-mode mass is summed from the non-mode counts rather than taken
    as ``nk`` minus the mode counts, so rounding can never lift the non-mode
    level above the smallest mode.
    """
    m = counts_k.shape[0]
    if order is None:
        order = np.argsort(-counts_k, kind="stable")
    total = counts_k.sum()
    if not total > 0:
        total = nk
    top = order[:ell]
    mode_mass = np.maximum(counts_k[top] / total, MASS_FLOOR)
    rest = max(counts_k[order[ell:]].sum() / total, MASS_FLOOR * (m - ell))
    return BlockParams(tuple(int(c) for c in top), np.append(mode_mass, rest), m)


def m_step(stats: SufficientStats, spec: ModelSpec) -> MixtureParams:
    """Closed-form maximizer of the expected complete-data log-likelihood.

    Modes sit on the ``ell`` largest counts; the remaining mass is spread
    uniformly over the other crossings.
    """
    nk = stats.nk
    if np.any(nk <= _EMPTY_CLASS):
        raise DegenerateFit(f"empty class in M-step: nk={nk}")
    pi = nk / nk.sum()
    blocks = []
    for k in range(spec.g):
        row = []
        for j in range(spec.d):
            row.append(fit_block(stats.counts[j][k], nk[k], spec.modes[k][j], stats.order(k, j)))
        blocks.append(tuple(row))
    return MixtureParams(pi, tuple(blocks))


def _run_start(seed_seq, data: BlockCodes, spec: ModelSpec, tol, max_iter, m_step_fn):
    rng = np.random.default_rng(seed_seq)
    g = spec.g
    for attempt in range(_MAX_REDRAWS):
        resp = rng.dirichlet(np.ones(g), size=data.n) if g > 1 else np.ones((data.n, 1))
        trace: list[float] = []
        try:
            params = m_step_fn(count_stats(data, resp=resp), spec)
            for it in range(max_iter):
                resp, ll = e_step(data, params)
                trace.append(ll)
                if len(trace) > 1 and ll - trace[-2] < tol:
                    break
                params = m_step_fn(count_stats(data, resp=resp), spec)
            else:
                resp, ll = e_step(data, params)
                trace.append(ll)
        except DegenerateFit:
            continue
        return EMResult(params, trace[-1], resp, spec, n_iter=len(trace), trace=trace, redraws=attempt)
    return None


def _seed_sequences(seed, count):
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(count)


def _best(results, spec, starts):
    best = None
    for s, res in enumerate(results):
        if res is None:
            continue
        res.start = s
        if best is None or res.loglik > best.loglik:
            best = res
    if best is None:
        raise EstimationError(
            f"all {starts} EM starts degenerated",
            {"starts": starts, "g": spec.g, "max_redraws": _MAX_REDRAWS},
        )
    return best


def em_fit(
    data: BlockCodes,
    spec: ModelSpec,
    starts: int = DEFAULT_STARTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=None,
    threads: int = 1,
) -> EMResult:
    """Best of ``starts`` EM runs, each initialized from flat-Dirichlet
    responsibilities.

    A run stops when the log-likelihood gain drops below ``tol`` or after
    ``max_iter`` iterations. Ties between starts go to the lowest index.
    """
    if data.sizes != spec.block_sizes:
        raise StructureError("data were encoded with a different partition")
    worker = partial(_run_start, data=data, spec=spec, tol=tol, max_iter=max_iter, m_step_fn=m_step)
    results = parallel_map(worker, _seed_sequences(seed, starts), threads)
    return _best(results, spec, starts)


def _cim_m_step(stats: SufficientStats, spec: ModelSpec) -> MixtureParams:
    nk = stats.nk
    if np.any(nk <= _EMPTY_CLASS):
        raise DegenerateFit(f"empty class in M-step: nk={nk}")
    blocks = []
    for k in range(spec.g):
        row = []
        for j in range(spec.d):
            probs = np.maximum(stats.counts[j][k] / nk[k], MASS_FLOOR)
            # The least probable modality plays the non-mode role.
            last = int(np.lexsort((np.arange(probs.size), -probs))[-1])
            keep = [h for h in range(probs.size) if h != last]
            row.append(BlockParams.from_masses(keep, probs[keep], probs[last], probs.size))
        blocks.append(tuple(row))
    return MixtureParams(nk / nk.sum(), tuple(blocks))


def cim_em_fit(
    data: BlockCodes,
    g: int,
    starts: int = DEFAULT_STARTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=None,
    threads: int = 1,
) -> EMResult:
    """Latent class model: one unconstrained multinomial per variable and class.

    ``data`` must be encoded with singleton blocks.
    """
    spec = ModelSpec(g, BlockPartition.singletons(data.d), tuple(tuple(m - 1 for m in data.sizes) for _ in range(g)), data.sizes)
    worker = partial(_run_start, data=data, spec=spec, tol=tol, max_iter=max_iter, m_step_fn=_cim_m_step)
    results = parallel_map(worker, _seed_sequences(seed, starts), threads)
    return _best(results, spec, starts)


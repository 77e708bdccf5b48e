"""Metropolis-within-Gibbs search over block partitions and mode counts at a
fixed class count, and final selection across class counts by BIC.

Each chain iteration
  1. draws the instrumental parameters (proportions and mode masses) given
     the current labels,
  2. draws the labels given those parameters,
  3. proposes moving one variable to another block (fresh mode counts for
     the blocks that changed) and accepts with a Metropolis-Hastings test
     on the integrated complete-data likelihood,
  4. updates every mode count by a +-1 move weighted by block evidence.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache, partial

import numpy as np
from scipy.special import xlogy

from . import bayes, kernels
from ._parallel import parallel_map
from .core import (
    BlockPartition,
    CategoricalDataset,
    ModelSpec,
    MixtureParams,
    SufficientStats,
    count_block,
    encode_block,
    encode_blocks,
)
from .em import DEFAULT_MAX_ITER, DEFAULT_STARTS, DEFAULT_TOL, EMResult, cim_em_fit, em_fit

DEFAULT_CHAINS = 25
DEFAULT_ITERS = 3000
DEFAULT_BURNIN = 1000
DEFAULT_CAP = 512

Block = tuple[int, ...]
StateKey = tuple[tuple[Block, ...], tuple[tuple[int, ...], ...]]


@lru_cache(maxsize=4096)
def _neighborhood(blocks: tuple[Block, ...]) -> tuple[BlockPartition, ...]:
    n_vars = sum(len(b) for b in blocks)
    if n_vars < 2:
        return ()
    found: dict[tuple[Block, ...], BlockPartition] = {}
    for v in range(n_vars):
        src = next(i for i, b in enumerate(blocks) if v in b)
        remaining = tuple(x for x in blocks[src] if x != v)
        others = [b for i, b in enumerate(blocks) if i != src]
        base = others + ([remaining] if remaining else [])
        targets = [tuple(b) for b in others]
        for dest in targets:
            new = [b for b in base if b != dest] + [dest + (v,)]
            part = BlockPartition(tuple(new))
            found.setdefault(part.blocks, part)
        if remaining:
            part = BlockPartition(tuple(base + [(v,)]))
            found.setdefault(part.blocks, part)
    return tuple(found[key] for key in sorted(found))


def neighborhood(partition: BlockPartition) -> list[BlockPartition]:
    """Distinct partitions obtained by moving exactly one variable to another
    existing block or to a new singleton block."""
    return list(_neighborhood(partition.blocks))


def state_key(partition: BlockPartition, ell: dict[Block, tuple[int, ...]]) -> StateKey:
    return partition.blocks, tuple(ell[b] for b in partition.blocks)


def _logsumexp(values) -> float:
    top = max(values)
    if top == -math.inf:
        return top
    return top + math.log(sum(math.exp(v - top) for v in values))


def format_partition(blocks) -> str:
    return str(BlockPartition(tuple(blocks)))


def format_modes(ells) -> str:
    """Mode counts flattened class-major: ``k0b0 k0b1 ...;k1b0 ...``."""
    g = len(ells[0])
    return ";".join(" ".join(str(e[k]) for e in ells) for k in range(g))


class BlockEvidence:
    """Per-block counts and log evidence for the current labels, cached."""

    def __init__(self, dataset: CategoricalDataset, g: int, labels: np.ndarray):
        self.cells = dataset.cells
        self.cards = dataset.cards
        self.g = g
        self._codes: dict[Block, np.ndarray] = {}
        self.set_labels(labels)

    def set_labels(self, labels):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.nk = np.bincount(self.labels, minlength=self.g).astype(np.float64)
        self._counts: dict[Block, np.ndarray] = {}
        self._sorted: dict[tuple[Block, int], tuple[np.ndarray, np.ndarray]] = {}
        self._paths: dict[tuple[Block, int], np.ndarray] = {}

    def size(self, block: Block) -> int:
        return math.prod(self.cards[v] for v in block)

    def codes(self, block: Block) -> np.ndarray:
        c = self._codes.get(block)
        if c is None:
            c = self._codes[block] = encode_block(self.cells, block, self.cards)
        return c

    def counts(self, block: Block) -> np.ndarray:
        c = self._counts.get(block)
        if c is None:
            c = self._counts[block] = count_block(self.codes(block), self.size(block), self.g, labels=self.labels)
        return c

    def sorted_counts(self, block: Block, k: int) -> tuple[np.ndarray, np.ndarray]:
        key = (block, k)
        hit = self._sorted.get(key)
        if hit is None:
            row = self.counts(block)[k]
            order = np.argsort(-row, kind="stable")
            hit = self._sorted[key] = (np.ascontiguousarray(row[order]), order)
        return hit

    def log_ev(self, block: Block, k: int, ell: int) -> float:
        key = (block, k)
        path = self._paths.get(key)
        if path is None or path.size < ell:
            m = self.size(block)
            top = min(m - 1, max(ell + 2, 2 * (0 if path is None else path.size)))
            ordered, _ = self.sorted_counts(block, k)
            path = self._paths[key] = np.asarray(
                kernels.log_block_evidence_path(ordered[:top], float(self.nk[k]), m, top)
            )
        return float(path[ell - 1])

    def block_total(self, block: Block, ells: tuple[int, ...]) -> float:
        return sum(self.log_ev(block, k, ells[k]) for k in range(self.g))

    def stats(self, partition: BlockPartition) -> SufficientStats:
        return SufficientStats(self.nk.copy(), tuple(self.counts(b) for b in partition.blocks))


@dataclass
class Candidate:
    partition: BlockPartition
    ell: dict[Block, tuple[int, ...]]
    new_blocks: tuple[Block, ...]
    old_blocks: tuple[Block, ...]
    log_q_ratio: float
    auto_reject: bool = False


@dataclass
class ChainState:
    partition: BlockPartition
    ell: dict[Block, tuple[int, ...]]
    labels: np.ndarray
    g: int
    params: MixtureParams | None = None
    iteration: int = 0
    tally: Counter = field(default_factory=Counter)
    best_logev: dict = field(default_factory=dict)
    diagnostics: Counter = field(default_factory=Counter)

    def key(self) -> StateKey:
        return state_key(self.partition, self.ell)

    def spec(self, cards) -> ModelSpec:
        return ModelSpec(self.g, self.partition, tuple(zip(*(self.ell[b] for b in self.partition.blocks))), cards)


def propose(state: ChainState, rng: np.random.Generator, cards, cap: int = DEFAULT_CAP) -> Candidate:
    """Move one variable uniformly within the neighborhood; draw mode counts of
    the changed blocks uniformly. ``log_q_ratio`` is log q(current | cand) -
    log q(cand | current)."""
    current = state.partition
    nbrs = neighborhood(current)
    if not nbrs:
        raise ValueError("no neighbor partitions: need at least two variables")
    cand = nbrs[int(rng.integers(len(nbrs)))]
    old = tuple(b for b in current.blocks if b not in set(cand.blocks))
    new = tuple(b for b in cand.blocks if b not in set(current.blocks))
    sizes = {b: math.prod(cards[v] for v in b) for b in old + new}
    ell = {b: state.ell[b] for b in cand.blocks if b in state.ell}
    for b in new:
        ell[b] = tuple(int(x) for x in rng.integers(1, sizes[b], size=state.g)) if sizes[b] <= cap else (1,) * state.g
    log_q = math.log(len(nbrs)) - math.log(len(neighborhood(cand)))
    log_q += state.g * (sum(math.log(sizes[b] - 1) for b in new) - sum(math.log(sizes[b] - 1) for b in old))
    auto_reject = any(sizes[b] > cap for b in new)
    return Candidate(cand, ell, new, old, log_q, auto_reject)


def mh_log_ratio(state: ChainState, cand: Candidate, evidence: BlockEvidence, label_prior: str | None = None) -> float:
    """log of the acceptance ratio; only the changed blocks contribute.

    ``label_prior`` adds log p(Z | g) to both numerator and denominator
    under the named convention; it cancels, which the tests exercise.
    """
    if cand.auto_reject:
        return -math.inf
    log_r = sum(evidence.block_total(b, cand.ell[b]) for b in cand.new_blocks)
    log_r -= sum(evidence.block_total(b, state.ell[b]) for b in cand.old_blocks)
    if label_prior is not None:
        lp = bayes.log_label_prior(evidence.nk, label_prior)
        log_r += lp - lp
    return log_r + cand.log_q_ratio


def mh_step(state: ChainState, cand: Candidate, evidence: BlockEvidence, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(log ratio)); updates ``state`` in place."""
    log_r = mh_log_ratio(state, cand, evidence)
    u = rng.random()
    if log_r >= 0 or (log_r > -math.inf and math.log(u) < log_r):
        state.partition = cand.partition
        state.ell = cand.ell
        return True
    return False


def sweep_mode_numbers(state: ChainState, evidence: BlockEvidence, rng: np.random.Generator,
                       mode_update: str = "metropolized") -> None:
    """Resample every mode count among {ell-1, ell, ell+1} with weights
    proportional to block evidence, classes outer and blocks inner.

    ``"metropolized"`` adds an accept step with probability
    min(1, S(ell) / S(ell')), S being the summed evidence of a value's
    neighbors, which makes each update reversible. ``"gibbs"`` keeps the
    plain weighted draw.
    """
    if mode_update not in ("metropolized", "gibbs"):
        raise ValueError(f"unknown mode update {mode_update!r}")
    for k in range(state.g):
        for block in state.partition.blocks:
            m = evidence.size(block)
            if m == 2:
                continue
            ells = list(state.ell[block])
            cur = ells[k]
            support = [x for x in (cur - 1, cur, cur + 1) if 0 < x < m]
            logw = [evidence.log_ev(block, k, x) for x in support]
            norm = _logsumexp(logw)
            u = rng.random()
            pick = support[-1]
            acc = 0.0
            for x, lw in zip(support, logw):
                acc += math.exp(lw - norm)
                if u < acc:
                    pick = x
                    break
            if pick == cur:
                continue
            if mode_update == "metropolized":
                pick_support = [x for x in (pick - 1, pick, pick + 1) if 0 < x < m]
                log_acc = norm - _logsumexp([evidence.log_ev(block, k, x) for x in pick_support])
                if log_acc < 0 and math.log(rng.random()) >= log_acc:
                    continue
            ells[k] = pick
            state.ell[block] = tuple(ells)


def state_log_evidence(state: ChainState, evidence: BlockEvidence) -> float:
    return sum(evidence.block_total(b, state.ell[b]) for b in state.partition.blocks)


@dataclass
class ChainResult:
    g: int
    tally: Counter
    best_logev: dict
    trace: list[tuple]
    diagnostics: Counter
    accepted: int
    iters: int

    def best(self) -> StateKey:
        return pick_best(self.tally, self.best_logev)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.iters if self.iters else 0.0


def pick_best(tally: Counter, best_logev: dict) -> StateKey:
    """Most visited state; ties go to the larger evidence, then to the
    smaller key."""
    if not tally:
        raise ValueError("empty tally")
    return min(tally, key=lambda s: (-tally[s], -best_logev.get(s, -math.inf), s))


def _initial_labels(dataset: CategoricalDataset, g: int, rng: np.random.Generator) -> np.ndarray:
    if g == 1:
        return np.zeros(dataset.n, dtype=np.int64)
    data = encode_blocks(dataset, BlockPartition.singletons(dataset.n_vars))
    fit = cim_em_fit(data, g, starts=1, max_iter=50, tol=1e-4, seed=np.random.SeedSequence(rng.integers(2**63)))
    return fit.labels.astype(np.int64)


def _draw_labels(state: ChainState, evidence: BlockEvidence, rng: np.random.Generator) -> None:
    spec = state.spec(evidence.cards)
    stats = evidence.stats(state.partition)
    params = bayes.sample_params(stats, spec, rng)
    data = encode_blocks_cached(evidence, state.partition)
    labels = None
    for _ in range(2):
        trial = bayes.sample_labels(data, params, rng)
        if np.bincount(trial, minlength=state.g).min() > 0:
            labels = trial
            break
        state.diagnostics["empty_class_retry"] += 1
    state.params = params
    if labels is None:
        # Keep the previous labelling: the last state with no empty class.
        state.diagnostics["empty_class_kept_previous"] += 1
        return
    state.labels = labels
    evidence.set_labels(labels)


def encode_blocks_cached(evidence: BlockEvidence, partition: BlockPartition) -> np.ndarray:
    return np.stack([evidence.codes(b) for b in partition.blocks], axis=1)


def run_chain(
    dataset: CategoricalDataset,
    g: int,
    iters: int = DEFAULT_ITERS,
    burnin: int = DEFAULT_BURNIN,
    seed=None,
    cap: int = DEFAULT_CAP,
    mode_update: str = "metropolized",
    init_partition: BlockPartition | None = None,
    record_trace: bool = True,
) -> ChainResult:
    """One Metropolis-within-Gibbs chain at ``g`` classes.

    With a single class the labels never change, so the instrumental
    parameter and label draws are skipped.
    """
    rng = np.random.default_rng(seed)
    cards = dataset.cards
    partition = init_partition or BlockPartition.singletons(dataset.n_vars)
    ell = {}
    for b in partition.blocks:
        m = math.prod(cards[v] for v in b)
        ell[b] = tuple(int(x) for x in rng.integers(1, m, size=g))
    labels = _initial_labels(dataset, g, rng)
    state = ChainState(partition, ell, labels, g)
    evidence = BlockEvidence(dataset, g, labels)
    trace: list[tuple] = []
    accepted = 0
    movable = dataset.n_vars >= 2
    for it in range(iters):
        if g > 1:
            _draw_labels(state, evidence, rng)
        acc = False
        if movable:
            cand = propose(state, rng, cards, cap)
            if cand.auto_reject:
                state.diagnostics["cap_rejections"] += 1
            acc = mh_step(state, cand, evidence, rng)
            accepted += acc
        sweep_mode_numbers(state, evidence, rng, mode_update)
        state.iteration = it + 1
        logev = state_log_evidence(state, evidence)
        key = state.key()
        if it >= burnin:
            state.tally[key] += 1
            if logev > state.best_logev.get(key, -math.inf):
                state.best_logev[key] = logev
        if record_trace:
            trace.append((it, format_partition(key[0]), format_modes(key[1]), logev, int(acc)))
    if not state.tally:
        key = state.key()
        state.tally[key] = 1
        state.best_logev[key] = state_log_evidence(state, evidence)
    return ChainResult(g, state.tally, state.best_logev, trace, state.diagnostics, accepted, iters)


def write_trace(trace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "sigma", "modes", "log_evidence", "accepted"])
        for it, sigma, modes, logev, acc in trace:
            writer.writerow([it, sigma, modes, repr(float(logev)), acc])


def merge_tallies(results: list[ChainResult]) -> tuple[Counter, dict]:
    tally: Counter = Counter()
    best: dict = {}
    for res in results:
        tally.update(res.tally)
        for key, val in res.best_logev.items():
            if val > best.get(key, -math.inf):
                best[key] = val
    return tally, best


def key_to_spec(key: StateKey, g: int, cards) -> ModelSpec:
    blocks, ells = key
    return ModelSpec(g, BlockPartition(blocks), tuple(zip(*ells)), cards)


@dataclass
class ClassCountResult:
    g: int
    spec: ModelSpec
    fit: EMResult
    bic: float
    chains: list[ChainResult]
    visits: int


@dataclass
class SelectionResult:
    by_g: list[ClassCountResult]

    @property
    def ranked(self) -> list[ClassCountResult]:
        return sorted(self.by_g, key=lambda r: (-r.bic, r.g))

    @property
    def best(self) -> ClassCountResult:
        return self.ranked[0]


def _chain_job(job, dataset, iters, burnin, cap, mode_update, record_trace):
    g, seed_seq = job
    return run_chain(dataset, g, iters, burnin, seed_seq, cap, mode_update, record_trace=record_trace)


def chain_seed(seed, g: int, chain: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(g, 0, chain))


def em_seed(seed, g: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(g, 1))


def select_structure(dataset, g, chains=DEFAULT_CHAINS, iters=DEFAULT_ITERS, burnin=DEFAULT_BURNIN,
                     seed=None, cap=DEFAULT_CAP, mode_update="metropolized", threads=1,
                     record_trace=True) -> tuple[ModelSpec, list[ChainResult], int]:
    """Pool ``chains`` chains at ``g`` classes and return the most visited
    structure."""
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
    jobs = [(g, chain_seed(seed, g, c)) for c in range(chains)]
    worker = partial(_chain_job, dataset=dataset, iters=iters, burnin=burnin, cap=cap,
                     mode_update=mode_update, record_trace=record_trace)
    results = parallel_map(worker, jobs, threads)
    tally, best = merge_tallies(results)
    key = pick_best(tally, best)
    return key_to_spec(key, g, dataset.cards), results, tally[key]


def select_model(
    dataset: CategoricalDataset,
    gmin: int = 1,
    gmax: int = 4,
    chains: int = DEFAULT_CHAINS,
    iters: int = DEFAULT_ITERS,
    burnin: int = DEFAULT_BURNIN,
    seed=None,
    cap: int = DEFAULT_CAP,
    starts: int = DEFAULT_STARTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    mode_update: str = "metropolized",
    threads: int = 1,
    record_trace: bool = True,
) -> SelectionResult:
    """For each g, pick a structure by pooled chains, fit it by EM, and rank
    the fits by observed-data BIC."""
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
    out = []
    for g in range(gmin, gmax + 1):
        spec, results, visits = select_structure(dataset, g, chains, iters, burnin, seed, cap,
                                                 mode_update, threads, record_trace)
        data = encode_blocks(dataset, spec.partition)
        fit = em_fit(data, spec, starts, tol, max_iter, seed=em_seed(seed, g), threads=threads)
        score = bayes.bic(fit.loglik, spec.n_params, dataset.n)
        out.append(ClassCountResult(g, spec, fit, score, results, visits))
    return SelectionResult(out)


def select_cim(dataset: CategoricalDataset, gmin=1, gmax=4, starts=DEFAULT_STARTS, tol=DEFAULT_TOL,
               max_iter=DEFAULT_MAX_ITER, seed=None, threads=1) -> list[tuple[int, EMResult, float]]:
    """Latent class fits for each g with their BIC, in g order."""
    data = encode_blocks(dataset, BlockPartition.singletons(dataset.n_vars))
    out = []
    for g in range(gmin, gmax + 1):
        fit = cim_em_fit(data, g, starts, tol, max_iter, seed=np.random.SeedSequence(seed, spawn_key=(g, 2)), threads=threads)
        out.append((g, fit, bayes.bic(fit.loglik, fit.spec.n_params, dataset.n)))
    return out


def mode_count_evidence(counts) -> int:
    """Mode count of a single known class maximizing the integrated
    likelihood over 1..m-1 (smallest on ties)."""
    counts = np.asarray(counts, dtype=np.float64)
    path = bayes.log_integrated_path(counts, counts.size - 1)
    return int(np.argmax(path)) + 1


def mode_count_bic_path(counts) -> np.ndarray:
    """Complete-data BIC of 1..m-1 modes for a single known class: maximized
    log-likelihood minus (ell / 2) log n."""
    counts = np.asarray(counts, dtype=np.float64)
    n, m = counts.sum(), counts.size
    ordered = -np.sort(-counts, kind="stable")
    ell = np.arange(1, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.cumsum(xlogy(ordered, ordered / n))[:-1]
        rest = n - np.cumsum(ordered)[:-1]
        tail = xlogy(rest, rest / (n * (m - ell)))
    return head + tail - 0.5 * ell * math.log(n)


def mode_count_bic(counts) -> int:
    return int(np.argmax(mode_count_bic_path(counts))) + 1

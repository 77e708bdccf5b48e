"""Data model: categorical datasets, block partitions, model specifications
and parameter containers.

Variables are indexed from 0 internally. Block crossings use a mixed-radix
code over the block's variables taken in ascending index order, the
lowest-indexed variable being the least significant digit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Cell probabilities of fitted blocks are floored here so that crossings
#: never observed in a class keep a strictly positive probability.
MASS_FLOOR = 1e-16


class StructureError(ValueError):
    """Inconsistent partition, specification or parameter shapes."""


class DataError(ValueError):
    """Malformed input data."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CategoricalDataset:
    """``n`` individuals described by ``B`` categorical variables.

    ``cells[i, b]`` is the index of individual ``i``'s modality in
    ``levels[b]``.
    """

    names: tuple[str, ...]
    levels: tuple[tuple[str, ...], ...]
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise DataError("cells must be a 2-d array")
        if cells.shape[1] != len(self.names) or len(self.levels) != len(self.names):
            raise DataError("names, levels and cell columns disagree")
        for b, lv in enumerate(self.levels):
            if len(lv) < 2:
                raise DataError(f"variable {self.names[b]!r} has fewer than two modalities")
        cells = cells.astype(np.int64, copy=True)
        if cells.size:
            cards = np.array([len(lv) for lv in self.levels])
            if cells.min() < 0 or np.any(cells >= cards):
                raise DataError("cell index out of range")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vars(self) -> int:
        return self.cells.shape[1]

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(len(lv) for lv in self.levels)

    def subset(self, rows) -> "CategoricalDataset":
        return CategoricalDataset(self.names, self.levels, self.cells[rows])

    def __eq__(self, other):
        if not isinstance(other, CategoricalDataset):
            return NotImplemented
        return (
            self.names == other.names
            and self.levels == other.levels
            and np.array_equal(self.cells, other.cells)
        )

    @classmethod
    def from_codes(cls, cells, cards: Sequence[int], names: Sequence[str] | None = None):
        """Build a dataset from integer codes with levels named ``"0"``, ``"1"``, ..."""
        cells = np.asarray(cells, dtype=np.int64)
        if names is None:
            names = [f"V{b + 1}" for b in range(len(cards))]
        levels = tuple(tuple(str(h) for h in range(m)) for m in cards)
        return cls(tuple(names), levels, cells)


def read_csv(path) -> CategoricalDataset:
    """Load a dataset from CSV: header row of variable names, string labels.

    Modalities are numbered in order of first appearance.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or any(not h.strip() for h in header):
            raise DataError(f"{path}: header has empty variable names")
        names = tuple(h.strip() for h in header)
        levels: list[dict[str, int]] = [{} for _ in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
            codes = []
            for b, value in enumerate(row):
                if value == "":
                    raise DataError(f"{path}:{lineno}: empty cell for {names[b]!r}")
                codes.append(levels[b].setdefault(value, len(levels[b])))
            rows.append(codes)
    cells = np.array(rows, dtype=np.int64).reshape(len(rows), len(names))
    return CategoricalDataset(names, tuple(tuple(lv) for lv in levels), cells)


def write_csv(dataset: CategoricalDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.names)
        for row in dataset.cells:
            writer.writerow([dataset.levels[b][c] for b, c in enumerate(row)])


@dataclass(frozen=True)
class BlockPartition:
    """Partition of the variable indices ``0..B-1`` into blocks.

    Blocks are stored sorted, and ordered by their smallest member, so two
    equal partitions compare and hash equal.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(int(v) for v in blk)) for blk in self.blocks)))
        seen: set[int] = set()
        for blk in blocks:
            if not blk:
                raise StructureError("empty block")
            for v in blk:
                if v in seen:
                    raise StructureError(f"variable {v} appears in two blocks")
                seen.add(v)
        if seen and seen != set(range(len(seen))):
            raise StructureError(f"blocks do not cover 0..{len(seen) - 1}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def singletons(cls, n_vars: int) -> "BlockPartition":
        return cls(tuple((b,) for b in range(n_vars)))

    @classmethod
    def parse(cls, text: str) -> "BlockPartition":
        """Parse ``"1,2|3,4|5"`` (1-based variable numbers)."""
        blocks = []
        for part in text.split("|"):
            part = part.strip().strip("{}()")
            if not part:
                raise StructureError(f"empty block in {text!r}")
            blocks.append(tuple(int(v) - 1 for v in part.split(",")))
        return cls(tuple(blocks))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_vars(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_of(self, var: int) -> int:
        for j, blk in enumerate(self.blocks):
            if var in blk:
                return j
        raise StructureError(f"variable {var} not in partition")

    def block_sizes(self, cards: Sequence[int]) -> tuple[int, ...]:
        return tuple(math.prod(cards[v] for v in blk) for blk in self.blocks)

    def __str__(self):
        return "(" + ",".join("{" + ",".join(str(v + 1) for v in blk) + "}" for blk in self.blocks) + ")"

    def key(self) -> str:
        return "|".join(",".join(str(v + 1) for v in blk) for blk in self.blocks)


@dataclass(frozen=True)
class ModelSpec:
    """A model structure: class count, block partition and mode counts.

    ``modes[k][j]`` is the number of modes of block ``j`` in class ``k``;
    ``cards`` holds the modality count of every variable.
    """

    g: int
    partition: BlockPartition
    modes: tuple[tuple[int, ...], ...]
    cards: tuple[int, ...]

    def __post_init__(self):
        modes = tuple(tuple(int(x) for x in row) for row in np.asarray(self.modes).reshape(self.g, -1))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        if self.g < 1:
            raise StructureError("g must be at least 1")
        if self.partition.n_vars != len(self.cards):
            raise StructureError("partition and modality counts cover different variables")
        d = self.partition.n_blocks
        sizes = self.block_sizes
        for k, row in enumerate(modes):
            if len(row) != d:
                raise StructureError(f"class {k} has {len(row)} mode counts for {d} blocks")
            for j, ell in enumerate(row):
                if not 0 < ell < sizes[j]:
                    raise StructureError(
                        f"mode count {ell} of class {k}, block {j} outside (0, {sizes[j]})"
                    )

    @property
    def d(self) -> int:
        return self.partition.n_blocks

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return self.partition.block_sizes(self.cards)

    @property
    def n_params(self) -> int:
        """Free parameter count: (g - 1) plus the total number of modes."""
        return self.g - 1 + sum(sum(row) for row in self.modes)

    def modes_array(self) -> np.ndarray:
        return np.array(self.modes, dtype=np.int64)

    @classmethod
    def cim(cls, g: int, cards: Sequence[int]) -> "ModelSpec":
        """Singleton blocks with m_b - 1 modes: the latent class model."""
        cards = tuple(cards)
        return cls(g, BlockPartition.singletons(len(cards)), tuple(tuple(m - 1 for m in cards) for _ in range(g)), cards)


@dataclass(frozen=True, eq=False)
class BlockParams:
    """Mode locations and masses of one class-block distribution.

    ``delta[h]`` is the crossing carrying the h-th mode; ``a[h]`` its mass for
    ``h < ell`` and ``a[ell]`` the total mass of the ``m - ell`` other
    crossings, which share it equally.
    """

    delta: tuple[int, ...]
    a: np.ndarray
    m: int

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(int(x) for x in self.delta))
        object.__setattr__(self, "a", _frozen_array(self.a, np.float64))
        object.__setattr__(self, "m", int(self.m))
        if len(self.a) != len(self.delta) + 1:
            raise StructureError("a must have one more entry than delta")

    @property
    def ell(self) -> int:
        return len(self.delta)

    def alpha(self) -> np.ndarray:
        """Probability of every crossing."""
        ell = self.ell
        out = np.full(self.m, self.a[ell] / (self.m - ell))
        out[list(self.delta)] = self.a[:ell]
        return out

    def check(self, rtol: float = 1e-12) -> None:
        """Raise ``StructureError`` unless the invariants hold."""
        a, ell, m = self.a, self.ell, self.m
        if not 0 < ell < m:
            raise StructureError(f"mode count {ell} outside (0, {m})")
        if len(set(self.delta)) != ell or min(self.delta) < 0 or max(self.delta) >= m:
            raise StructureError(f"invalid mode locations {self.delta}")
        if np.any(a <= 0) or np.any(a > 1 + rtol):
            raise StructureError(f"masses outside (0, 1]: {a}")
        if abs(a.sum() - 1.0) > rtol * m:
            raise StructureError(f"masses sum to {a.sum()!r}")
        if np.any(np.diff(a[:ell]) > rtol):
            raise StructureError(f"mode masses not in decreasing order: {a[:ell]}")
        level = a[ell] / (m - ell)
        if np.any(a[:ell] < level * (1 - rtol)):
            raise StructureError("a mode mass is below the non-mode crossing level")

    def __eq__(self, other):
        if not isinstance(other, BlockParams):
            return NotImplemented
        return self.delta == other.delta and self.m == other.m and np.array_equal(self.a, other.a)

    @classmethod
    def from_masses(cls, delta: Sequence[int], mode_mass: Sequence[float], rest: float, m: int):
        """Build canonical params: modes sorted by decreasing mass, ties by crossing."""
        order = sorted(range(len(delta)), key=lambda h: (-mode_mass[h], delta[h]))
        a = [mode_mass[h] for h in order] + [rest]
        return cls(tuple(delta[h] for h in order), np.array(a), m)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Class proportions and per-class, per-block parameters ``blocks[k][j]``."""

    pi: np.ndarray
    blocks: tuple[tuple[BlockParams, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen_array(self.pi, np.float64))
        object.__setattr__(self, "blocks", tuple(tuple(row) for row in self.blocks))
        if len(self.blocks) != len(self.pi):
            raise StructureError("pi and blocks disagree on the class count")

    @property
    def g(self) -> int:
        return len(self.pi)

    def check(self, spec: ModelSpec | None = None) -> None:
        if np.any(self.pi <= 0) or abs(self.pi.sum() - 1) > 1e-12:
            raise StructureError(f"invalid proportions {self.pi}")
        for k, row in enumerate(self.blocks):
            for j, bp in enumerate(row):
                bp.check()
                if spec is not None and (bp.ell != spec.modes[k][j] or bp.m != spec.block_sizes[j]):
                    raise StructureError(f"block ({k}, {j}) does not match the specification")

    def log_alpha(self) -> list[np.ndarray]:
        """Per block, the (g, m_j) table of log crossing probabilities."""
        d = len(self.blocks[0])
        return [np.log(np.stack([self.blocks[k][j].alpha() for k in range(self.g)])) for j in range(d)]

    def __eq__(self, other):
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return np.array_equal(self.pi, other.pi) and self.blocks == other.blocks


@dataclass(frozen=True, eq=False)
class BlockCodes:
    """Block-coded dataset: ``codes[i, j]`` is the crossing of block ``j``."""

    codes: np.ndarray
    sizes: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        return len(self.sizes)


def _check_partition(partition: BlockPartition, n_vars: int) -> None:
    if partition.n_vars != n_vars:
        raise StructureError(f"partition covers {partition.n_vars} variables, dataset has {n_vars}")


def encode_block(cells: np.ndarray, block: Sequence[int], cards: Sequence[int]) -> np.ndarray:
    """Crossing index of one block for every row of ``cells``."""
    code = np.zeros(cells.shape[0], dtype=np.int64)
    radix = 1
    for v in sorted(block):
        code += cells[:, v] * radix
        radix *= cards[v]
    return code


def encode_blocks(dataset: CategoricalDataset, partition: BlockPartition) -> BlockCodes:
    _check_partition(partition, dataset.n_vars)
    cards = dataset.cards
    codes = np.empty((dataset.n, partition.n_blocks), dtype=np.int64)
    for j, blk in enumerate(partition.blocks):
        codes[:, j] = encode_block(dataset.cells, blk, cards)
    codes.setflags(write=False)
    return BlockCodes(codes, partition.block_sizes(cards))


def decode_block(code, block: Sequence[int], cards: Sequence[int]) -> dict[int, np.ndarray]:
    """Inverse of :func:`encode_block`: modality index of each block variable."""
    code = np.asarray(code, dtype=np.int64)
    out = {}
    for v in sorted(block):
        out[v] = code % cards[v]
        code = code // cards[v]
    return out


def decode_blocks(codes: np.ndarray, partition: BlockPartition, cards: Sequence[int]) -> np.ndarray:
    codes = np.asarray(codes)
    cells = np.empty((codes.shape[0], partition.n_vars), dtype=np.int64)
    for j, blk in enumerate(partition.blocks):
        for v, col in decode_block(codes[:, j], blk, cards).items():
            cells[:, v] = col
    return cells


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Class counts ``nk`` and per-block class-by-crossing counts.

    ``counts[j]`` has shape ``(g, m_j)``. Counts are hard (integers stored as
    floats) or responsibility-weighted.
    """

    nk: np.ndarray
    counts: tuple[np.ndarray, ...]
    _order_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def g(self) -> int:
        return len(self.nk)

    def order(self, k: int, j: int) -> np.ndarray:
        """Crossings of block ``j`` sorted by decreasing count in class ``k``.

        Ties go to the smaller crossing index.
        """
        key = (k, j)
        if key not in self._order_cache:
            self._order_cache[key] = np.argsort(-self.counts[j][k], kind="stable")
        return self._order_cache[key]

    def ordered(self, k: int, j: int) -> np.ndarray:
        return self.counts[j][k][self.order(k, j)]

    def residuals(self, k: int, j: int) -> np.ndarray:
        """``nk[k]`` minus the sum of the h largest counts, for h = 1..m_j."""
        return np.maximum(self.nk[k] - np.cumsum(self.ordered(k, j)), 0.0)


def count_block(codes_j: np.ndarray, size: int, g: int, labels=None, resp=None) -> np.ndarray:
    """(g, size) count table of one block, from hard labels or responsibilities."""
    if labels is not None:
        flat = np.bincount(np.asarray(labels) * size + codes_j, minlength=g * size)
        return flat.reshape(g, size).astype(np.float64)
    out = np.empty((g, size))
    for k in range(g):
        out[k] = np.bincount(codes_j, weights=resp[:, k], minlength=size)
    return out


def count_stats(data: BlockCodes, g: int | None = None, *, labels=None, resp=None) -> SufficientStats:
    """Sufficient statistics from hard labels or a responsibility matrix."""
    if (labels is None) == (resp is None):
        raise ValueError("pass exactly one of labels or resp")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (data.n,):
            raise StructureError("labels must have one entry per individual")
        if g is None:
            g = int(labels.max()) + 1 if labels.size else 1
        nk = np.bincount(labels, minlength=g).astype(np.float64)
    else:
        resp = np.asarray(resp, dtype=np.float64)
        if resp.ndim != 2 or resp.shape[0] != data.n:
            raise StructureError("responsibilities must be an (n, g) matrix")
        g = resp.shape[1]
        nk = resp.sum(axis=0)
    counts = tuple(
        count_block(data.codes[:, j], data.sizes[j], g, labels=labels, resp=resp) for j in range(data.d)
    )
    return SufficientStats(nk, counts)


def one_hot(labels, g: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, g))
    out[np.arange(labels.size), labels] = 1.0
    return out


def all_cells(cards: Iterable[int]) -> np.ndarray:
    """Every joint modality assignment, as an (prod(cards), B) array."""
    cards = tuple(cards)
    grid = np.indices(cards).reshape(len(cards), -1).T
    return np.ascontiguousarray(grid, dtype=np.int64)


def align_levels(dataset: CategoricalDataset, names: Sequence[str], levels: Sequence[Sequence[str]]
                 ) -> CategoricalDataset:
    """Re-express ``dataset`` with the given variable order and modality order.

    Labels absent from the dataset are allowed; labels unknown to ``levels``
    raise ``DataError``.
    """
    names = tuple(names)
    if set(names) != set(dataset.names) or len(names) != len(dataset.names):
        raise DataError(f"variables {dataset.names} do not match {names}")
    cells = np.empty((dataset.n, len(names)), dtype=np.int64)
    for b, name in enumerate(names):
        src = dataset.names.index(name)
        index = {lab: h for h, lab in enumerate(levels[b])}
        try:
            remap = np.array([index[lab] for lab in dataset.levels[src]], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"variable {name!r}: unknown modality {exc.args[0]!r}") from None
        cells[:, b] = remap[dataset.cells[:, src]] if dataset.n else remap[:0]
    return CategoricalDataset(names, tuple(tuple(lv) for lv in levels), cells)

"""Priors, full-conditional samplers and the integrated complete-data
likelihood used by the structure search.

Mode masses are sampled through stick fractions: with the h-th largest
count ``n_(h)`` and ``r_h`` individuals left after the h largest crossings,
fraction h follows Beta(n_(h) + 1, r_h + 1) truncated to
``[1 / (m - h + 1), 1]`` and the mode masses are rebuilt from the
fractions. The same factorization gives the integrated block likelihood in
closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import kernels
from .core import BlockParams, MixtureParams, ModelSpec, StructureError, SufficientStats
from .likelihood import joint_log_matrix
from .special import DomainError


@dataclass(frozen=True)
class HyperParams:
    """Jeffreys Dirichlet weight for proportions, flat truncated-Dirichlet
    shape for mode masses."""

    dirichlet_half: float = 0.5
    gamma: float = 1.0


HYPER = HyperParams()


def sample_proportions(nk, rng: np.random.Generator) -> np.ndarray:
    """Draw pi from Dirichlet(1/2 + n_1, ..., 1/2 + n_g)."""
    nk = np.asarray(getattr(nk, "nk", nk), dtype=np.float64)
    if nk.size == 1:
        return np.ones(1)
    pi = rng.dirichlet(HYPER.dirichlet_half + nk)
    # Dirichlet draws with a 1/2 shape can underflow to exactly zero.
    pi = np.maximum(pi, 1e-300)
    return pi / pi.sum()


def posterior_mode_locations(stats: SufficientStats, spec: ModelSpec) -> list[list[tuple[int, ...]]]:
    """Crossings of the ``ell_kj`` largest counts, by decreasing count
    (ties to the smaller crossing)."""
    return [
        [tuple(int(c) for c in stats.order(k, j)[: spec.modes[k][j]]) for j in range(spec.d)]
        for k in range(spec.g)
    ]


def masses_from_fractions(eps: np.ndarray) -> tuple[np.ndarray, float]:
    """Stick-breaking: mode masses ``eps_h * prod_{h'<h} (1 - eps_h')`` and
    the leftover non-mode mass."""
    left = np.concatenate(([1.0], np.cumprod(1.0 - eps)))
    return eps * left[:-1], float(left[-1])


def fractions_from_masses(mode_mass) -> np.ndarray:
    mode_mass = np.asarray(mode_mass, dtype=np.float64)
    left = 1.0 - np.concatenate(([0.0], np.cumsum(mode_mass)[:-1]))
    return mode_mass / left


def sample_block(ordered: np.ndarray, order: np.ndarray, nk: float, ell: int, m: int,
                 rng: np.random.Generator) -> BlockParams:
    ordered = np.ascontiguousarray(ordered, dtype=np.float64)
    eps = kernels.sample_stick_fractions(ordered, float(nk), ell, m, rng.random(ell))
    mode_mass, rest = masses_from_fractions(np.asarray(eps))
    bp = BlockParams.from_masses([int(c) for c in order[:ell]], mode_mass, rest, m)
    level = bp.a[ell] / (m - ell)
    if np.any(bp.a[:ell] < level * (1 - 1e-12)) or bp.a[ell] <= 0:
        raise AssertionError(f"sampled masses violate the truncated simplex: {bp.a}")
    return bp


def sample_block_probs(stats: SufficientStats, spec: ModelSpec, rng: np.random.Generator
                       ) -> tuple[tuple[BlockParams, ...], ...]:
    """Draw every block's mode masses from its truncated posterior, with mode
    locations fixed at the largest counts."""
    sizes = spec.block_sizes
    out = []
    for k in range(spec.g):
        row = []
        for j in range(spec.d):
            order = stats.order(k, j)
            ordered = stats.counts[j][k][order]
            row.append(sample_block(ordered, order, stats.nk[k], spec.modes[k][j], sizes[j], rng))
        out.append(tuple(row))
    return tuple(out)


def sample_params(stats: SufficientStats, spec: ModelSpec, rng: np.random.Generator) -> MixtureParams:
    pi = sample_proportions(stats.nk, rng)
    return MixtureParams(pi, sample_block_probs(stats, spec, rng))


def sample_labels(codes: np.ndarray, params: MixtureParams, rng: np.random.Generator) -> np.ndarray:
    """Draw z_i from its full conditional, proportional to pi_k p(x_i; alpha_k)."""
    joint = joint_log_matrix(codes, params)
    joint -= joint.max(axis=1, keepdims=True)
    prob = np.exp(joint)
    cum = np.cumsum(prob, axis=1)
    u = rng.random(cum.shape[0]) * cum[:, -1]
    labels = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(labels, params.g - 1)


def log_integrated_block(counts, ell: int, m: int | None = None) -> float:
    """Approximate log p(X^j | Z, ell) for one class and block.

    ``counts`` are the class's crossing counts (any order). Mode locations are
    fixed at the ``ell`` largest counts; the mode masses are integrated out
    exactly under the flat truncated prior.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if m is None:
        m = counts.size
    if not 0 < ell < m:
        raise DomainError(f"mode count {ell} outside (0, {m})")
    ordered = np.zeros(max(ell, counts.size))
    ordered[: counts.size] = -np.sort(-counts, kind="stable")
    return float(kernels.log_block_evidence(np.ascontiguousarray(ordered[:ell]), float(counts.sum()), int(ell), int(m)))


def log_integrated_path(counts, ell_max: int, m: int | None = None) -> np.ndarray:
    """``log_integrated_block`` for every mode count 1..ell_max at once."""
    counts = np.asarray(counts, dtype=np.float64)
    if m is None:
        m = counts.size
    if not 0 < ell_max < m:
        raise DomainError(f"mode count {ell_max} outside (0, {m})")
    ordered = np.zeros(max(ell_max, counts.size))
    ordered[: counts.size] = -np.sort(-counts, kind="stable")
    return np.asarray(kernels.log_block_evidence_path(
        np.ascontiguousarray(ordered[:ell_max]), float(counts.sum()), int(m), int(ell_max)))


def log_integrated_complete(stats: SufficientStats, spec: ModelSpec) -> float:
    """Sum of the block terms over classes and blocks.

    The label prior p(Z | g) is left out: it does not depend on the block
    structure and cancels from every ratio the sampler forms.
    """
    if len(stats.counts) != spec.d or stats.g != spec.g:
        raise StructureError("statistics do not match the specification")
    sizes = spec.block_sizes
    total = 0.0
    for k in range(spec.g):
        for j in range(spec.d):
            total += log_integrated_block(stats.counts[j][k], spec.modes[k][j], sizes[j])
    return total


def log_label_prior(nk, convention: str) -> float:
    """log p(Z | g) under one of two conventions.

    ``"uniform"``: every labelling equally likely. ``"jeffreys"``: labels
    marginalized over Dirichlet(1/2, ..., 1/2) proportions.
    """
    nk = np.asarray(nk, dtype=np.float64)
    g, n = nk.size, nk.sum()
    if convention == "uniform":
        return -n * math.log(g)
    if convention == "jeffreys":
        h = HYPER.dirichlet_half
        return float(gammaln(g * h) - g * gammaln(h) + gammaln(nk + h).sum() - gammaln(n + g * h))
    raise ValueError(f"unknown label prior convention {convention!r}")


def bic(loglik: float, nu: int, n: int) -> float:
    """loglik - (nu / 2) log n; larger is better."""
    return float(loglik - 0.5 * nu * math.log(n)) if n > 0 else float(loglik)

"""Component and mixture densities, log-likelihoods and (kappa, rho) summaries.

Everything is evaluated in log space.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .core import BlockCodes, MixtureParams, ModelSpec, all_cells, encode_blocks, CategoricalDataset


def _as_codes(codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    return codes.reshape(1, -1) if codes.ndim == 1 else codes


def component_log_matrix(codes, params: MixtureParams) -> np.ndarray:
    """(n, g) matrix of log p(x_i; alpha_k)."""
    codes = _as_codes(codes)
    out = np.zeros((codes.shape[0], params.g))
    for j, table in enumerate(params.log_alpha()):
        out += table[:, codes[:, j]].T
    return out


def component_logpdf(codes, params: MixtureParams, k: int) -> np.ndarray | float:
    """log p(x; alpha_k) for one individual (1-d codes) or many (2-d)."""
    codes = np.asarray(codes, dtype=np.int64)
    return sum(np.log(bp.alpha()[codes[..., j]]) for j, bp in enumerate(params.blocks[k]))


def joint_log_matrix(codes, params: MixtureParams) -> np.ndarray:
    """(n, g) matrix of log pi_k + log p(x_i; alpha_k)."""
    return component_log_matrix(codes, params) + np.log(params.pi)


def mixture_logpdf(codes, params: MixtureParams) -> np.ndarray:
    """log p(x_i; theta) for each row of ``codes``."""
    return logsumexp(joint_log_matrix(codes, params), axis=1)


def observed_loglik(data: BlockCodes | np.ndarray, params: MixtureParams) -> float:
    codes = data.codes if isinstance(data, BlockCodes) else np.asarray(data)
    if codes.shape[0] == 0:
        return 0.0
    return float(mixture_logpdf(codes, params).sum())


def complete_loglik(data: BlockCodes | np.ndarray, labels, params: MixtureParams) -> float:
    codes = data.codes if isinstance(data, BlockCodes) else np.asarray(data)
    labels = np.asarray(labels, dtype=np.int64)
    if codes.shape[0] == 0:
        return 0.0
    joint = joint_log_matrix(codes, params)
    return float(joint[np.arange(codes.shape[0]), labels].sum())


def summaries(params: MixtureParams, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Complexity ``kappa[k, j] = ell / (m_j - 1)`` and strength
    ``rho[k, j]`` (total mass of the modes)."""
    sizes = np.array(spec.block_sizes, dtype=np.float64)
    kappa = spec.modes_array() / (sizes - 1)
    rho = np.array([[bp.a[: bp.ell].sum() for bp in row] for row in params.blocks])
    return kappa, rho


def cell_log_pmf(params: MixtureParams, spec: ModelSpec, cells: np.ndarray | None = None) -> np.ndarray:
    """Mixture log-probability of each row of ``cells`` (default: every cell)."""
    if cells is None:
        cells = all_cells(spec.cards)
    ds = CategoricalDataset.from_codes(cells, spec.cards)
    return mixture_logpdf(encode_blocks(ds, spec.partition).codes, params)

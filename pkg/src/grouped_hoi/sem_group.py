"""Semantic groups over interaction queries: cosine top-K, max-pooled context, residual update."""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ConfigError
from .layers import NormMlp


class SemLayerParams:
    """``phi4`` maps ``[q_i, q_j - q_i]`` (2d) to d; ``phi5`` maps the pooled context back to d.

    Both are ``depth`` linear layers of width d with normalisation + ReLU
    after each; ``phi5`` ends in a plain linear layer so the residual update
    can take either sign.
    """

    def __init__(self, store: nx.ParamStore, prefix: str, d: int, depth: int = 2, norm: str = "layer"):
        if depth < 1:
            raise ConfigError(f"sem_depth must be >= 1, got {depth}")
        self.phi4 = NormMlp(store, f"{prefix}.phi4", [2 * d] + [d] * depth, norm, final_act=True)
        self.phi5 = NormMlp(store, f"{prefix}.phi5", [d] * (depth + 1), norm, final_act=False)

    def set_training(self, flag: bool) -> None:
        for mlp in (self.phi4, self.phi5):
            for norm in mlp.norms:
                if norm is not None and hasattr(norm, "training"):
                    norm.training = flag


def cosine_sim_matrix(Q) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``[..., n, d]``; zero rows score 0 against everything."""
    q = np.asarray(Q.data if isinstance(Q, nx.Tensor) else Q, dtype=np.float64)
    norm = np.sqrt((q * q).sum(axis=-1, keepdims=True))
    nonzero = norm > 0
    unit = np.where(nonzero, q / np.where(nonzero, norm, 1.0), 0.0)
    sim = unit @ np.swapaxes(unit, -1, -2)
    sim = 0.5 * (sim + np.swapaxes(sim, -1, -2))
    n = sim.shape[-1]
    diag = nonzero[..., 0].astype(np.float64)
    sim[..., np.arange(n), np.arange(n)] = diag
    return np.clip(sim, -1.0, 1.0)


def select_semantic_neighbors(sim, k: int) -> np.ndarray:
    """The ``k`` most similar other rows per row (ties -> lower index); ``[..., n, min(k, n-1)]``."""
    if k <= 0:
        raise ConfigError(f"K^s must be positive, got {k}")
    s = -np.array(sim, dtype=np.float64)
    n = s.shape[-1]
    if s.shape[-2] != n:
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    s[..., np.arange(n), np.arange(n)] = np.inf
    return np.argsort(s, axis=-1, kind="stable")[..., : min(k, n - 1)]


def _pair_features(q_i, group_rows):
    """``[q_i, q_j - q_i]`` for every group member -> ``[..., K, 2d]``."""
    qi = nx.reshape(q_i, q_i.shape[:-1] + (1, q_i.shape[-1]))
    qi = qi + np.zeros((group_rows.shape[-2], 1))
    return nx.concat([qi, group_rows - qi], axis=-1)


def semantic_context(q_i, group_rows, phi4):
    """Max over the group of ``phi4([q_i, q_j - q_i])``; ``group_rows`` is ``[..., K, d]``."""
    q_i, group_rows = nx.as_tensor(q_i), nx.as_tensor(group_rows)
    return nx.channel_max(phi4(_pair_features(q_i, group_rows)), axis=-2)


def integrate_context(q_i, m_i, phi5):
    """Residual update ``q_i + phi5(m_i)``."""
    q_i = nx.as_tensor(q_i)
    delta = phi5(nx.as_tensor(m_i))
    if delta.shape != q_i.shape:
        raise nx.DimensionError(f"context update {delta.shape} does not match query {q_i.shape}")
    return q_i + delta


def semantic_layer(Q_int, k: int, params: SemLayerParams, trace=None):
    """Rebuild semantic groups from the current queries and apply the pooled residual update.

    ``Q_int``: ``[..., n, d]``.  With a single query there are no neighbours and
    the input is returned unchanged.
    """
    if k <= 0:
        raise ConfigError(f"K^s must be positive, got {k}")
    if Q_int.shape[-2] <= 1:
        return Q_int
    groups = select_semantic_neighbors(cosine_sim_matrix(Q_int), k)
    if trace is not None:
        trace["semantic"] = groups
    m = semantic_context(Q_int, nx.gather_rows(Q_int, groups), params.phi4)
    return integrate_context(Q_int, m, params.phi5)

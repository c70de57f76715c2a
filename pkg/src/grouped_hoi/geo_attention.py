"""Geometric-aware local transformer: vector attention inside proximity groups.

For entity ``i`` with group ``N(i)``::

    p_ij  = delta(e_i - e_j)
    t_ij  = softmax_j( gamma(phi1(q_i) - phi2(q_j) + p_ij) )      # per channel
    q~_i  = theta( sum_j t_ij * (phi3(q_j) + p_ij) ) + q_i

``e`` is the query positional embedding by default (``pe_source="positional"``)
or the content embedding itself (``"content"``).
"""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .errors import ConfigError
from .geometry import DEFAULT_PROXIMITY, lowest_k, pairwise_spatial_features
from .layers import Linear, Mlp


class GeoLayerParams:
    def __init__(self, store: nx.ParamStore, prefix: str, d: int, proximity=DEFAULT_PROXIMITY):
        self.delta = Mlp(store, f"{prefix}.delta", [d, d, d])
        self.phi1 = Linear(store, f"{prefix}.phi1", d, d)
        self.phi2 = Linear(store, f"{prefix}.phi2", d, d)
        self.phi3 = Linear(store, f"{prefix}.phi3", d, d)
        self.gamma = Mlp(store, f"{prefix}.gamma", [d, d, d])
        self.theta = Linear(store, f"{prefix}.theta", d, d)
        # (w_dis, w_iou, bias); hard top-k selection passes it no gradient
        self.proximity = store.add(f"{prefix}.proximity", (3,), value=proximity)


def _unsqueeze_rows(x):
    """``[..., n, d]`` -> ``[..., n, 1, d]`` (a bare ``[d]`` vector becomes ``[1, d]``)."""
    return nx.reshape(x, x.shape[:-1] + (1, x.shape[-1]))


def position_encoding(e_i, e_j, delta):
    """``delta(e_i - e_j)``; ``e_j`` may carry an extra group axis."""
    e_i, e_j = nx.as_tensor(e_i), nx.as_tensor(e_j)
    if e_i.shape[-1] != e_j.shape[-1]:
        raise nx.DimensionError(f"embedding dims differ: {e_i.shape} vs {e_j.shape}")
    if e_j.ndim == e_i.ndim + 1:
        e_i = _unsqueeze_rows(e_i)
    return delta(e_i - e_j)


def dispatch_matrix(q_i, neighbors, p, params: GeoLayerParams):
    """Per-channel softmax weights over the ``K`` group members (axis -2).

    ``q_i``: ``[..., d]``; ``neighbors`` and ``p``: ``[..., K, d]``.
    """
    q_i, neighbors = nx.as_tensor(q_i), nx.as_tensor(neighbors)
    if neighbors.shape[-2] == 0:
        raise nx.EmptyGroupError("dispatch over an empty group")
    logits = params.gamma(_unsqueeze_rows(params.phi1(q_i)) - params.phi2(neighbors) + p)
    return nx.softmax(logits, axis=-2)


def aggregate_geometric(q, groups: np.ndarray, p_all, params: GeoLayerParams):
    """Grouped vector attention with residual: ``theta(sum_j t_ij * (phi3(q_j) + p_ij)) + q_i``.

    ``q``: ``[..., n, d]``; ``groups``: int ``[..., n, K]``; ``p_all``: ``[..., n, K, d]``.
    A group axis of length zero leaves ``q`` unchanged.
    """
    groups = np.asarray(groups, dtype=np.int64)
    if groups.shape[-1] == 0:
        return q
    nbr = nx.gather_rows(q, groups)
    t = dispatch_matrix(q, nbr, p_all, params)
    agg = nx.tsum(t * (params.phi3(nbr) + p_all), axis=-2)
    return params.theta(agg) + q


def build_geometric_groups(boxes: np.ndarray, weights, k: int, exclude_self: bool = True,
                           squared_distance: bool = False) -> np.ndarray:
    """Proximity scores from ``[..., n, 4]`` boxes, then the ``k`` lowest per row."""
    w_dis, w_iou, bias = (float(w) for w in weights)
    dis, ov = pairwise_spatial_features(boxes, squared_distance)
    return lowest_k(w_dis * dis + w_iou * ov + bias, k, exclude_self)


def _broadcast_batch(x, batch: tuple):
    if x.shape[:-2] == batch:
        return x
    return x + np.zeros(batch + (1, 1))


def _apply(q, e, boxes, params, cfg, trace, tag):
    groups = build_geometric_groups(boxes, params.proximity.data, cfg.k_geo, cfg.exclude_self, cfg.squared_distance)
    if trace is not None:
        trace[tag] = groups
    if groups.shape[-1] == 0:
        return q
    e = _broadcast_batch(e, q.shape[:-2])
    p = position_encoding(e, nx.gather_rows(e, groups), params.delta)
    return aggregate_geometric(q, groups, p, params)


def geometric_layer(Q_h, Q_o, pos_h, pos_o, boxes_h, boxes_o, params: GeoLayerParams, cfg, trace=None):
    """Update human and object embeddings with their geometric groups.

    ``cfg`` supplies ``k_geo``, ``exclude_self``, ``squared_distance``,
    ``group_mode`` (``"intra"``: humans with humans, objects with objects;
    ``"mixed"``: one pool) and ``pe_source``.  Boxes are plain arrays; grouping
    is recomputed from them on every call.
    """
    if cfg.k_geo <= 0:
        raise ConfigError(f"K^g must be positive, got {cfg.k_geo}")
    if cfg.pe_source == "positional":
        e_h, e_o = pos_h, pos_o
    elif cfg.pe_source == "content":
        e_h, e_o = Q_h, Q_o
    else:
        raise ConfigError(f"pe_source must be 'positional' or 'content', got {cfg.pe_source!r}")
    boxes_h, boxes_o = np.asarray(boxes_h, dtype=np.float64), np.asarray(boxes_o, dtype=np.float64)
    if cfg.group_mode == "intra":
        return (
            _apply(Q_h, e_h, boxes_h, params, cfg, trace, "human"),
            _apply(Q_o, e_o, boxes_o, params, cfg, trace, "object"),
        )
    if cfg.group_mode == "mixed":
        n_h = Q_h.shape[-2]
        batch = Q_h.shape[:-2]
        q = nx.concat([Q_h, Q_o], axis=-2)
        e = nx.concat([_broadcast_batch(e_h, batch), _broadcast_batch(e_o, batch)], axis=-2)
        out = _apply(q, e, np.concatenate([boxes_h, boxes_o], axis=-2), params, cfg, trace, "mixed")
        return out[..., :n_h, :], out[..., n_h:, :]
    raise ConfigError(f"group_mode must be 'intra' or 'mixed', got {cfg.group_mode!r}")

"""Finite-difference verification of every differentiable op and of a micro-scale model."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .geo_attention import GeoLayerParams, geometric_layer
from .layers import Attention, LayerNorm, NormMlp
from .losses import (PairTargets, asymmetric_cls_loss, focal_loss, giou_tensor, hoi_loss,
                     proposal_loss, weighted_cross_entropy)
from .model import HOIModel, ModelConfig, grid_centers
from .sem_group import SemLayerParams, semantic_layer
from .training import assign_targets


@dataclass
class CheckRow:
    name: str
    max_rel_err: float
    n_checked: int
    passed: bool


def micro_config(**overrides) -> ModelConfig:
    base = dict(d_entity=4, feature_dim=4, n_queries=2, encoder_layers=1, instance_decoder_layers=1,
                interaction_decoder_layers=1, heads=2, ffn_mult=1, num_object_classes=2,
                num_interactions=3, k_geo=4, k_sem=2)
    base.update(overrides)
    return ModelConfig(**base)


def _away_from_zero(rng, shape, lo=0.2):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, 1.0, size=shape)


def _param(rng, shape, kind="normal"):
    data = _away_from_zero(rng, shape) if kind == "signed" else rng.normal(size=shape)
    if kind == "positive":
        data = rng.uniform(0.5, 2.0, size=shape)
    return nx.Tensor(data, requires_grad=True)


def _projected(out, w):
    """Scalar ``sum(out * w)`` so every output coordinate carries a distinct weight."""
    return nx.tsum(out * w)


def op_cases(seed: int = 0):
    """``(name, f, params)`` for each primitive; inputs avoid kinks of the non-smooth ops."""
    rng = np.random.default_rng(seed)
    cases = []

    def add_case(name, fn, params, out_shape):
        w = rng.normal(size=out_shape)
        cases.append((name, lambda fn=fn, w=w: _projected(fn(), w), params))

    a, b = _param(rng, (3, 4)), _param(rng, (4,))
    add_case("add", lambda: a + b, [a, b], (3, 4))
    add_case("sub", lambda: a - b, [a, b], (3, 4))
    add_case("mul", lambda: a * b, [a, b], (3, 4))
    c = _param(rng, (3, 4), "signed")
    add_case("div", lambda: a / c, [a, c], (3, 4))
    p = _param(rng, (3, 4), "positive")
    add_case("power", lambda: nx.power(p, 2.5), [p], (3, 4))
    add_case("exp", lambda: nx.exp(a), [a], (3, 4))
    add_case("log", lambda: nx.log(p), [p], (3, 4))
    add_case("sin", lambda: nx.sin(a * 3.0), [a], (3, 4))
    add_case("relu", lambda: nx.relu(c), [c], (3, 4))
    add_case("sigmoid", lambda: nx.sigmoid(a), [a], (3, 4))
    add_case("log_sigmoid", lambda: nx.log_sigmoid(a), [a], (3, 4))
    add_case("absolute", lambda: nx.absolute(c), [c], (3, 4))
    d = nx.Tensor(c.data + np.where(rng.random((3, 4)) < 0.5, 0.3, -0.3), requires_grad=True)
    add_case("maximum", lambda: nx.maximum(c, d), [c, d], (3, 4))
    add_case("minimum", lambda: nx.minimum(c, d), [c, d], (3, 4))
    add_case("sum", lambda: nx.tsum(a, axis=0), [a], (4,))
    add_case("mean", lambda: nx.mean(a, axis=1, keepdims=True), [a], (3, 1))
    add_case("reshape", lambda: nx.reshape(a, (4, 3)), [a], (4, 3))
    add_case("swapaxes", lambda: nx.swapaxes(a, 0, 1), [a], (4, 3))
    idx = np.array([2, 0, 2, 1])
    add_case("index", lambda: a[idx], [a], (4, 4))
    add_case("concat", lambda: nx.concat([a, c], axis=0), [a, c], (6, 4))
    add_case("stack", lambda: nx.stack([a, c], axis=1), [a, c], (3, 2, 4))
    x3, y3 = _param(rng, (2, 3, 4)), _param(rng, (2, 4, 5))
    add_case("matmul", lambda: nx.matmul(x3, y3), [x3, y3], (2, 3, 5))
    W, bias = _param(rng, (4, 5)), _param(rng, (5,))
    add_case("affine", lambda: nx.affine(x3, W, bias), [x3, W, bias], (2, 3, 5))
    add_case("softmax", lambda: nx.softmax(x3, axis=-2), [x3], (2, 3, 4))
    add_case("log_softmax", lambda: nx.log_softmax(x3, axis=-1), [x3], (2, 3, 4))
    g, s = _param(rng, (4,)), _param(rng, (4,))
    add_case("layer_norm", lambda: nx.layer_norm(x3, g, s), [x3, g, s], (2, 3, 4))
    gidx = np.array([[[1, 2], [0, 0], [2, 1]], [[0, 1], [2, 2], [1, 0]]])
    add_case("gather_rows", lambda: nx.gather_rows(x3, gidx), [x3], (2, 3, 2, 4))
    # distinct values along the pooled axis so the max is unique by a wide margin
    base = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4)
    mx = nx.Tensor(rng.permuted(base, axis=1) * 0.5 + rng.uniform(-0.1, 0.1, base.shape), requires_grad=True)
    add_case("channel_max", lambda: nx.channel_max(mx, axis=-2), [mx], (2, 4))
    return cases


def loss_cases(seed: int = 0):
    rng = np.random.default_rng(seed + 1)
    cases = []
    boxes = nx.Tensor(np.column_stack([rng.uniform(0.3, 0.7, (5, 2)), rng.uniform(0.1, 0.3, (5, 2))]),
                      requires_grad=True)
    target = np.column_stack([rng.uniform(0.3, 0.7, (5, 2)), rng.uniform(0.1, 0.3, (5, 2))])
    cases.append(("giou", lambda: nx.tsum(giou_tensor(boxes, target)), [boxes]))
    logits = nx.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    y = (rng.random((4, 3)) < 0.4).astype(float)
    cases.append(("asymmetric_loss", lambda: asymmetric_cls_loss(logits, y), [logits]))
    cases.append(("focal_loss", lambda: focal_loss(logits, y), [logits]))
    labels = np.array([0, 2, 1, 2])
    cw = np.array([1.0, 1.0, 0.1])
    cases.append(("weighted_ce", lambda: weighted_cross_entropy(logits, labels, cw), [logits]))
    return cases


def module_cases(seed: int = 0):
    rng = np.random.default_rng(seed + 2)
    cfg = micro_config()
    d = 8
    cases = []

    store = nx.ParamStore(seed)
    geo = GeoLayerParams(store, "geo", d)
    qh, qo = _param(rng, (2, 5, d)), _param(rng, (2, 5, d))
    ph, po = _param(rng, (5, d)), _param(rng, (5, d))
    bh = np.column_stack([rng.uniform(0.2, 0.8, (5, 2)), rng.uniform(0.05, 0.3, (5, 2))])[None].repeat(2, 0)
    bo = np.column_stack([rng.uniform(0.2, 0.8, (5, 2)), rng.uniform(0.05, 0.3, (5, 2))])[None].repeat(2, 0)
    w = rng.normal(size=(2, 5, d))

    def geo_fn():
        h, o = geometric_layer(qh, qo, ph, po, bh, bo, geo, cfg)
        return nx.tsum(h * w) + nx.tsum(o * w)

    cases.append(("geometric_layer", geo_fn, {"qh": qh, "qo": qo, "ph": ph, **store.params}))

    store2 = nx.ParamStore(seed + 1)
    sem = SemLayerParams(store2, "sem", 3 * d, depth=2, norm="layer")
    qi = _param(rng, (2, 5, 3 * d))
    w2 = rng.normal(size=(2, 5, 3 * d))
    cases.append(("semantic_layer", lambda: nx.tsum(semantic_layer(qi, 2, sem) * w2), {"q": qi, **store2.params}))

    store3 = nx.ParamStore(seed + 2)
    att = Attention(store3, "att", d, 2)
    ln = LayerNorm(store3, "ln", d)
    xq, xk = _param(rng, (2, 3, d)), _param(rng, (2, 6, d))
    w3 = rng.normal(size=(2, 3, d))
    cases.append(("attention+layer_norm", lambda: nx.tsum(ln(att(xq, xk, xk)) * w3),
                  {"q": xq, "k": xk, **store3.params}))

    store4 = nx.ParamStore(seed + 3)
    mlp = NormMlp(store4, "mlp", [d, d, d], "layer", final_act=False)
    xm = _param(rng, (4, d))
    w4 = rng.normal(size=(4, d))
    cases.append(("norm_mlp", lambda: nx.tsum(mlp(xm) * w4), {"x": xm, **store4.params}))
    return cases


def model_case(seed: int = 0, query_init: str = "proposal"):
    """Full micro model: encoder, both decoders with grouping, heads, the matched loss and,
    when queries come from proposals, the dense proposal loss."""
    rng = np.random.default_rng(seed + 3)
    cfg = micro_config(init_seed=seed, instance_decoder_layers=2, query_init=query_init)
    model = HOIModel(cfg)
    hw = 9
    feats = rng.normal(size=(2, hw, cfg.feature_dim))
    pos = rng.normal(size=(hw, cfg.d_entity))

    def box(n):
        return np.column_stack([rng.uniform(0.25, 0.75, (n, 2)), rng.uniform(0.1, 0.3, (n, 2))])

    targets = [PairTargets(box(2), box(2), np.array([0, 1]), np.array([[1.0, 0, 1], [0, 1, 0]])),
               PairTargets(box(1), box(1), np.array([1]), np.array([[0.0, 0, 1]]))]
    with nx.no_grad():
        assignments = assign_targets(model(feats, pos), targets, cfg.match_weights)
    settings = cfg.loss_settings()

    def fn():
        out = model(feats, pos)
        total = hoi_loss(out, targets, assignments, settings).total
        for aux in out.aux:
            total = total + hoi_loss(aux, targets, assignments, settings).total
        if out.proposals:
            total = total + proposal_loss(out.proposals["logits"], out.proposals["human"], out.proposals["object"],
                                          targets, grid_centers(hw), settings).total
        return total

    return (f"micro_model_{query_init}", fn, dict(model.store.params))


def run_gradcheck(tol: float = 1e-4, h: float = 1e-4, seed: int = 0, max_coords: int | None = 12,
                  model_coords: int | None = 4) -> list[CheckRow]:
    """All checks.

    ``max_coords`` caps probed coordinates per tensor for the module cases and
    ``model_coords`` for the full models, whose ~180 tensors make each probe costly.
    Every tensor is still probed.
    """
    rows = []
    groups = [(op_cases(seed) + loss_cases(seed), None), (module_cases(seed), max_coords),
              ([model_case(seed), model_case(seed, "learned")], model_coords)]
    for cases, cap in groups:
        for name, fn, params in cases:
            rep = nx.finite_diff_check(fn, params, h=h, tol=tol, max_coords=cap, seed=seed)
            rows.append(CheckRow(name, rep.max_rel_err, rep.n_checked, rep.passed))
    return rows


def format_table(rows: list[CheckRow]) -> str:
    lines = ["check,max_rel_err,n_checked,passed"]
    for r in rows:
        err = "inf" if math.isinf(r.max_rel_err) else f"{r.max_rel_err:.3e}"
        lines.append(f"{r.name},{err},{r.n_checked},{int(r.passed)}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    t0 = time.perf_counter()
    print(format_table(run_gradcheck()), f"{time.perf_counter() - t0:.1f}s")

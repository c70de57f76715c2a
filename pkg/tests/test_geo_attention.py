from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grouped_hoi import numerics as nx
from grouped_hoi.errors import EmptyGroupError
from grouped_hoi.geo_attention import (GeoLayerParams, aggregate_geometric, dispatch_matrix, geometric_layer,
                                       position_encoding)
from grouped_hoi.layers import Mlp


def cfg(**kw):
    base = dict(k_geo=4, exclude_self=True, squared_distance=False, group_mode="intra", pe_source="positional")
    base.update(kw)
    return SimpleNamespace(**base)


def params(d, seed=0):
    return GeoLayerParams(nx.ParamStore(seed), "geo", d)


def identity_mlp(d):
    mlp = Mlp(nx.ParamStore(0), "m", [d, d, d])
    for layer in mlp.layers:
        layer.weight.data[:] = np.eye(d)
    return mlp


def random_boxes(rng, n):
    return np.column_stack([rng.uniform(0.2, 0.8, (n, 2)), rng.uniform(0.05, 0.3, (n, 2))])


def test_position_encoding_relu_chain():
    out = position_encoding(np.array([1.0, -2.0]), np.zeros(2), identity_mlp(2))
    np.testing.assert_array_equal(out.data, [1.0, 0.0])


def test_position_encoding_zero_input_is_bias_path():
    p = params(3)
    out = position_encoding(np.ones(3), np.ones(3), p.delta)
    expected = nx.affine_relu_stack(np.zeros(3), [(l.weight, l.bias) for l in p.delta.layers]).data
    np.testing.assert_array_equal(out.data, expected)


def test_dispatch_hand_softmax():
    p = params(2)
    for lin in (p.phi1, p.phi2):
        lin.weight.data[:] = 0.0
    for layer in p.gamma.layers:
        layer.weight.data[:] = np.eye(2)
    pe = np.array([[2.0, 2.0], [0.0, 0.0]])
    t = dispatch_matrix(np.zeros(2), np.zeros((2, 2)), pe, p).data
    e2 = np.exp(2.0)
    np.testing.assert_allclose(t[:, 0], [e2 / (e2 + 1), 1 / (e2 + 1)], atol=1e-12)
    np.testing.assert_allclose(t[:, 0], [0.8808, 0.1192], atol=1e-4)


def test_dispatch_singleton_and_identical_members():
    p = params(4)
    rng = np.random.default_rng(0)
    q = rng.normal(size=4)
    np.testing.assert_array_equal(dispatch_matrix(q, rng.normal(size=(1, 4)), rng.normal(size=(1, 4)), p).data,
                                  np.ones((1, 4)))
    nb, pe = rng.normal(size=4), rng.normal(size=4)
    t = dispatch_matrix(q, np.stack([nb, nb]), np.stack([pe, pe]), p).data
    np.testing.assert_allclose(t, 0.5, atol=1e-15)
    with pytest.raises(EmptyGroupError):
        dispatch_matrix(q, np.zeros((0, 4)), np.zeros((0, 4)), p)


@settings(max_examples=40)
@given(st.integers(2, 10), st.integers(1, 5), st.integers(0, 10_000))
def test_dispatch_weights_sum_to_one(n, k, seed):
    rng = np.random.default_rng(seed)
    p = params(6, seed)
    q = nx.Tensor(rng.normal(size=(n, 6)) * 3)
    nbr = rng.normal(size=(n, k, 6)) * 3
    t = dispatch_matrix(q, nbr, rng.normal(size=(n, k, 6)), p).data
    np.testing.assert_allclose(t.sum(axis=-2), 1.0, atol=1e-9)


def test_aggregate_theta_zero_is_identity(rng):
    p = params(5)
    p.theta.weight.data[:] = 0.0
    q = rng.normal(size=(4, 5))
    groups = np.array([[1, 2], [0, 2], [3, 1], [2, 0]])
    out = aggregate_geometric(nx.Tensor(q), groups, rng.normal(size=(4, 2, 5)), p)
    np.testing.assert_array_equal(out.data, q)


def test_aggregate_single_neighbor_with_identity_maps(rng):
    d = 3
    p = params(d)
    for lin in (p.phi3, p.theta):
        lin.weight.data[:] = np.eye(d)
    q = rng.normal(size=(3, d))
    groups = np.array([[1], [2], [0]])
    out = aggregate_geometric(nx.Tensor(q), groups, np.zeros((3, 1, d)), p)
    np.testing.assert_allclose(out.data, q[[1, 2, 0]] + q, atol=1e-15)


@settings(max_examples=30)
@given(st.integers(2, 16), st.integers(0, 10_000))
def test_geometric_layer_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    d = 4
    p = params(d, seed)
    qh, qo = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    ph, po = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    bh, bo = random_boxes(rng, n), random_boxes(rng, n)
    c = cfg(k_geo=3)
    h1, o1 = geometric_layer(nx.Tensor(qh), nx.Tensor(qo), ph, po, bh, bo, p, c)
    perm = rng.permutation(n)
    h2, o2 = geometric_layer(nx.Tensor(qh[perm]), nx.Tensor(qo[perm]), ph[perm], po[perm], bh[perm], bo[perm], p, c)
    assert np.abs(h2.data - h1.data[perm]).max() <= 1e-9
    assert np.abs(o2.data - o1.data[perm]).max() <= 1e-9


def test_geometric_layer_single_entities_is_identity(rng):
    p = params(4)
    qh, qo = rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
    h, o = geometric_layer(nx.Tensor(qh), nx.Tensor(qo), rng.normal(size=(1, 4)), rng.normal(size=(1, 4)),
                           random_boxes(rng, 1), random_boxes(rng, 1), p, cfg())
    np.testing.assert_array_equal(h.data, qh)
    np.testing.assert_array_equal(o.data, qo)


def test_identical_humans_give_symmetric_outputs(rng):
    p = params(4)
    q = np.repeat(rng.normal(size=(1, 4)), 2, axis=0)
    pos = np.repeat(rng.normal(size=(1, 4)), 2, axis=0)
    b = np.repeat(random_boxes(rng, 1), 2, axis=0)
    trace = {}
    h, _ = geometric_layer(nx.Tensor(q), nx.Tensor(q), pos, pos, b, b, p, cfg(), trace)
    assert trace["human"].tolist() == [[1], [0]]
    np.testing.assert_array_equal(h.data[0], h.data[1])


def test_moving_objects_leaves_humans_unchanged_in_intra_mode(rng):
    p = params(4)
    n = 5
    args = [rng.normal(size=(n, 4)) for _ in range(4)]
    bh, bo = random_boxes(rng, n), random_boxes(rng, n)
    h1, o1 = geometric_layer(nx.Tensor(args[0]), nx.Tensor(args[1]), args[2], args[3], bh, bo, p, cfg(k_geo=2))
    h2, o2 = geometric_layer(nx.Tensor(args[0]), nx.Tensor(args[1]), args[2], args[3], bh, random_boxes(rng, n), p,
                             cfg(k_geo=2))
    np.testing.assert_array_equal(h1.data, h2.data)


def test_mixed_mode_pools_both_types(rng):
    p = params(4)
    trace = {}
    geometric_layer(nx.Tensor(rng.normal(size=(3, 4))), nx.Tensor(rng.normal(size=(3, 4))),
                    rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), random_boxes(rng, 3), random_boxes(rng, 3),
                    p, cfg(group_mode="mixed", k_geo=5), trace)
    assert trace["mixed"].shape == (6, 5)


def test_proximity_weights_receive_no_gradient(rng):
    p = params(4)
    h, o = geometric_layer(nx.Tensor(rng.normal(size=(4, 4)), requires_grad=True), nx.Tensor(rng.normal(size=(4, 4))),
                           rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), random_boxes(rng, 4),
                           random_boxes(rng, 4), p, cfg(k_geo=2))
    nx.tsum(h * h).backward()
    assert p.proximity.grad is None or np.all(p.proximity.grad == 0)
    assert p.theta.weight.grad is not None

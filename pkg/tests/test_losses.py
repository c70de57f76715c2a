from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grouped_hoi import numerics as nx
from grouped_hoi.errors import BoxError
from grouped_hoi.geometry import Box
from grouped_hoi.losses import (LossSettings, PairTargets, asymmetric_cls_loss, combine_components, focal_loss,
                                giou_loss, giou_tensor, hoi_loss, match_cost, match_cost_matrix,
                                weighted_cross_entropy)
from grouped_hoi.matching import Assignment


def test_giou_hand_values():
    assert giou_loss(Box(0.3, 0.3, 0.2, 0.2), Box(0.3, 0.3, 0.2, 0.2)) == pytest.approx(0.0, abs=1e-15)
    val = giou_loss(Box(0.25, 0.25, 0.5, 0.5), Box(0.5, 0.5, 0.5, 0.5))
    assert val == pytest.approx(1 - (1 / 7 - (0.5625 - 0.4375) / 0.5625), abs=1e-12)
    assert val == pytest.approx(1.0794, abs=1e-4)
    far = giou_loss(Box(0.01, 0.01, 0.001, 0.001), Box(0.99, 0.99, 0.001, 0.001))
    assert 1.99 < far <= 2.0


def test_giou_rejects_degenerate():
    with pytest.raises(BoxError):
        giou_loss(np.array([0.5, 0.5, 0.0, 0.1]), Box(0.5, 0.5, 0.1, 0.1))


def test_giou_tensor_agrees_with_scalar(rng):
    a = np.column_stack([rng.uniform(0.3, 0.7, (6, 2)), rng.uniform(0.05, 0.4, (6, 2))])
    b = np.column_stack([rng.uniform(0.3, 0.7, (6, 2)), rng.uniform(0.05, 0.4, (6, 2))])
    g = giou_tensor(nx.Tensor(a), b).data
    for i in range(6):
        assert 1 - g[i] == pytest.approx(giou_loss(Box(*a[i]), Box(*b[i])), abs=1e-12)


def test_asl_hand_value_and_bce_reduction(rng):
    assert float(asymmetric_cls_loss(np.array([0.0]), np.array([1.0])).data) == pytest.approx(np.log(2), abs=1e-12)
    x, y = rng.normal(size=(4, 3)), (rng.random((4, 3)) < 0.5).astype(float)
    p = 1 / (1 + np.exp(-x))
    bce = -np.sum(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert float(asymmetric_cls_loss(x, y, 0.0, 0.0, 0.0).data) == pytest.approx(bce, rel=1e-12)


def test_asl_perfect_logits_vanish():
    y = np.array([1.0, 0.0, 1.0])
    assert float(asymmetric_cls_loss(np.array([40.0, -40.0, 40.0]), y).data) < 1e-12


def test_focal_is_nonnegative(rng):
    assert float(focal_loss(rng.normal(size=(3, 4)), rng.random((3, 4)) < 0.5).data) >= 0


def test_weighted_cross_entropy_matches_manual():
    logits = np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    labels = np.array([0, 2])
    w = np.array([1.0, 1.0, 0.1])
    logp = logits - np.log(np.exp(logits).sum(1, keepdims=True))
    expected = -(logp[0, 0] * 1.0 + logp[1, 2] * 0.1) / 1.1
    assert float(weighted_cross_entropy(logits, labels, w).data) == pytest.approx(expected, abs=1e-14)


def test_lambda_weighted_sum_of_unit_components():
    assert combine_components({"box": 1.0, "giou": 1.0, "obj": 1.0, "int": 1.0}) == pytest.approx(5.5, abs=1e-12)


def test_match_cost_perfect_prediction():
    box_h, box_o = [0.4, 0.5, 0.2, 0.3], [0.6, 0.5, 0.1, 0.1]
    pred = {"human_box": box_h, "object_box": box_o, "obj_prob": [0.0, 1.0, 0.0], "int_prob": [1.0, 0.0, 1.0]}
    gt = {"human_box": box_h, "object_box": box_o, "object_label": 1, "interactions": [1, 0, 1]}
    assert match_cost(pred, gt) == pytest.approx(-2.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_match_cost_matrix_entries_match_pairwise(seed):
    rng = np.random.default_rng(seed)
    Q, G = 4, 2
    boxes = lambda n: np.column_stack([rng.uniform(0.2, 0.8, (n, 2)), rng.uniform(0.05, 0.3, (n, 2))])
    hb, ob = boxes(Q), boxes(Q)
    op = rng.dirichlet(np.ones(3), size=Q)
    ip = rng.random((Q, 2))
    tg = PairTargets(boxes(G), boxes(G), rng.integers(0, 2, G), np.array([[1.0, 0.0], [1.0, 1.0]]))
    m = match_cost_matrix(hb, ob, op, ip, tg)
    for g in range(G):
        for q in range(Q):
            pred = {"human_box": hb[q], "object_box": ob[q], "obj_prob": op[q], "int_prob": ip[q]}
            gt = {"human_box": tg.human_boxes[g], "object_box": tg.object_boxes[g],
                  "object_label": tg.object_labels[g], "interactions": tg.interactions[g]}
            assert m[g, q] == pytest.approx(match_cost(pred, gt), abs=1e-12)


def _output(hb, ob, obj_logits, int_logits):
    t = lambda a: nx.Tensor(np.asarray(a, dtype=float)[None], requires_grad=True)
    return SimpleNamespace(human_boxes=t(hb), object_boxes=t(ob), obj_logits=t(obj_logits),
                           int_logits=None if int_logits is None else t(int_logits))


def test_perfect_matched_prediction_has_zero_box_terms():
    hb = np.array([[0.4, 0.5, 0.2, 0.3], [0.5, 0.5, 0.1, 0.1]])
    ob = np.array([[0.6, 0.5, 0.1, 0.1], [0.5, 0.5, 0.1, 0.1]])
    tg = PairTargets(hb[:1], ob[:1], np.array([0]), np.array([[1.0, 0.0]]))
    out = _output(hb, ob, np.zeros((2, 3)), np.zeros((2, 2)))
    res = hoi_loss(out, [tg], [Assignment((0,), 0.0)])
    assert res.components["box"] == 0.0
    assert res.components["giou"] == pytest.approx(0.0, abs=1e-12)


def test_empty_ground_truth_only_object_term():
    out = _output(np.full((3, 4), 0.5), np.full((3, 4), 0.5), np.zeros((3, 3)), np.zeros((3, 2)))
    empty = PairTargets(np.zeros((0, 4)), np.zeros((0, 4)), np.zeros(0, dtype=int), np.zeros((0, 2)))
    res = hoi_loss(out, [empty], [Assignment((), 0.0)])
    assert res.components["box"] == res.components["giou"] == res.components["int"] == 0.0
    assert res.components["obj"] == pytest.approx(np.log(3), abs=1e-12)
    assert float(res.total.data) == pytest.approx(np.log(3), abs=1e-12)


def test_aux_output_without_interaction_logits():
    hb = np.array([[0.4, 0.5, 0.2, 0.3]])
    tg = PairTargets(hb, hb, np.array([0]), np.array([[1.0, 0.0]]))
    res = hoi_loss(_output(hb, hb, np.zeros((1, 3)), None), [tg], [Assignment((0,), 0.0)])
    assert res.components["int"] == 0.0


def test_loss_settings_select_interaction_loss():
    hb = np.array([[0.4, 0.5, 0.2, 0.3]])
    tg = PairTargets(hb, hb, np.array([0]), np.array([[1.0, 0.0]]))
    vals = {kind: hoi_loss(_output(hb, hb, np.zeros((1, 3)), np.zeros((1, 2))), [tg], [Assignment((0,), 0.0)],
                           LossSettings(cls_loss=kind)).components["int"] for kind in ("asl", "focal", "bce")}
    assert vals["bce"] == pytest.approx(2 * np.log(2), abs=1e-12)
    assert len(set(vals.values())) == 3

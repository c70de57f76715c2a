import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grouped_hoi.errors import BoxError, ConfigError
from grouped_hoi.geometry import (Box, center_distance, iou, lowest_k, pairwise_iou, proximity_scores,
                                  select_geometric_neighbors, sine_embed_points, spatial_feature)
from grouped_hoi.oracles import oracle_knn

boxes = st.builds(Box, st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.01, 0.5), st.floats(0.01, 0.5))


def test_iou_hand_values():
    a = Box(0.5, 0.5, 0.2, 0.2)
    assert iou(a, a) == 1.0
    assert iou(Box(0.2, 0.2, 0.1, 0.1), Box(0.8, 0.8, 0.1, 0.1)) == 0.0
    assert iou(Box(0.25, 0.25, 0.5, 0.5), Box(0.5, 0.5, 0.5, 0.5)) == pytest.approx(1 / 7, abs=1e-12)


def test_degenerate_box_rejected():
    with pytest.raises(BoxError):
        Box(0.5, 0.5, 0.0, 0.1)
    with pytest.raises(BoxError):
        Box(0.5, 0.5, 0.1, -0.2)


def test_center_distance_hand_values():
    assert center_distance(Box(0.0, 0.0, 0.1, 0.1), Box(1.0, 0.0, 0.1, 0.1)) == 1.0
    assert center_distance(Box(0.0, 0.0, 0.1, 0.1), Box(0.3, 0.4, 0.1, 0.1)) == pytest.approx(0.5, abs=1e-15)


def test_spatial_feature_cases():
    a = Box(0.3, 0.3, 0.2, 0.2)
    f = spatial_feature(a, a)
    assert (f.dis, f.iou) == (0.0, 1.0)
    f = spatial_feature(Box(0.2, 0.5, 0.1, 0.1), Box(0.7, 0.5, 0.1, 0.1))
    assert f.dis == pytest.approx(0.5) and f.iou == 0.0


@given(boxes, boxes)
def test_symmetry_to_the_last_bit(a, b):
    assert iou(a, b) == iou(b, a)
    assert center_distance(a, b) == center_distance(b, a)
    v = iou(a, b)
    assert 0.0 <= v <= 1.0


@given(st.lists(boxes, min_size=2, max_size=6), st.floats(-0.04, 0.04), st.floats(-0.04, 0.04))
def test_translation_keeps_spatial_features(bs, dx, dy):
    arr = np.array([b.as_array() for b in bs])
    shifted = arr + [dx, dy, 0, 0]
    inside = lambda a: np.all(a[:, :2] - a[:, 2:] / 2 >= 0) and np.all(a[:, :2] + a[:, 2:] / 2 <= 1)
    if not (inside(arr) and inside(shifted)):
        return
    np.testing.assert_allclose(pairwise_iou(arr, arr), pairwise_iou(shifted, shifted), atol=1e-9)
    s0, s1 = proximity_scores(arr), proximity_scores(shifted)
    np.testing.assert_allclose(s0, s1, atol=1e-9)


def test_proximity_scores_hand_values():
    a = Box(0.3, 0.3, 0.2, 0.2)
    np.testing.assert_array_equal(proximity_scores([a, a], (0, 0, 0)), np.zeros((2, 2)))
    assert proximity_scores([a, a])[0, 1] == -1.0
    s = proximity_scores([Box(0.2, 0.5, 0.1, 0.1), Box(0.7, 0.5, 0.1, 0.1)])
    assert s[0, 1] == pytest.approx(0.5)


def test_neighbor_selection_examples():
    row = np.array([[-1.0, 0.2, 0.5, 0.1]] * 4)
    assert list(select_geometric_neighbors(row, 2)[0]) == [3, 1]
    assert list(select_geometric_neighbors(row, 10)[0]) == [3, 1, 2]
    tie = np.array([[0.0, 0.2, 0.2], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert list(select_geometric_neighbors(tie, 2)[0]) == [1, 2]
    with pytest.raises(ConfigError):
        select_geometric_neighbors(row, 0)


def test_class_mask_keeps_groups_within_type():
    rng = np.random.default_rng(3)
    s = rng.random((6, 6))
    kind = np.array([0, 0, 0, 1, 1, 1])
    groups = select_geometric_neighbors(s, 4, class_mask=kind[:, None] == kind[None, :])
    for i, g in enumerate(groups):
        assert len(g) == 2 and np.all(kind[g] == kind[i]) and i not in g


def test_lowest_k_matches_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 33))
        k = int(rng.integers(1, 40))
        s = np.round(rng.random((n, n)), int(rng.integers(1, 4)))  # rounding forces ties
        for exclude in (True, False):
            got = lowest_k(s, k, exclude)
            want = oracle_knn(s, k, exclude)
            assert [list(r) for r in got] == want
            assert [list(r) for r in select_geometric_neighbors(s, k, exclude)] == want


def test_sine_embedding_shape_and_range():
    xy = np.array([[0.1, 0.9], [0.5, 0.5]])
    e = sine_embed_points(xy, 8)
    assert e.shape == (2, 8) and np.all(np.abs(e) <= 1)
    with pytest.raises(ConfigError):
        sine_embed_points(xy, 6)

import json
from dataclasses import replace

import numpy as np
import pytest

from grouped_hoi.errors import ConfigError, DataError, GenerationError
from grouped_hoi.geometry import Box
from grouped_hoi.synth import (INTERACTIONS, Scene, SynthConfig, generate_scene, interaction_counts, label_scene,
                               make_splits, rare_classes, rasterize, read_dataset, rule_holds, scene_to_line,
                               write_dataset)

CFG = SynthConfig()


def test_same_seed_same_scene():
    assert generate_scene(17, CFG) == generate_scene(17, CFG)
    assert scene_to_line(generate_scene(17, CFG)) != scene_to_line(generate_scene(18, CFG))


def test_forced_hold_case():
    cfg = replace(CFG, min_humans=1, max_humans=1, min_objects=1, max_objects=1, rules="hold")
    for seed in range(20):
        s = generate_scene(seed, cfg)
        assert s.triplets == [(0, 0, INTERACTIONS.index("hold"))]
        h, (o, _) = s.humans[0], s.objects[0]
        assert h.cx - h.w / 2 <= o.cx - o.w / 2 and o.cx + o.w / 2 <= h.cx + h.w / 2


def test_counts_within_ranges():
    for seed in range(1000):
        s = generate_scene(seed, CFG)
        assert CFG.min_humans <= len(s.humans) <= CFG.max_humans
        assert CFG.min_objects <= len(s.objects) <= CFG.max_objects


def test_every_triplet_satisfies_its_rule():
    for seed in range(300):
        s = generate_scene(seed, CFG)
        for h, o, a in s.triplets:
            box, cls = s.objects[o]
            assert rule_holds(INTERACTIONS[a], s.humans[h], box, cls, s.humans, CFG)
        assert s.triplets == label_scene(s.humans, s.objects, CFG)


def test_team_needs_two_humans():
    o = Box(0.5, 0.5, 0.1, 0.1)
    h1, h2 = Box(0.4, 0.5, 0.1, 0.3), Box(0.6, 0.5, 0.1, 0.3)
    assert rule_holds("team", h1, o, 0, [h1, h2], CFG)
    assert not rule_holds("team", h1, o, 0, [h1], CFG)


def test_infeasible_config_raises():
    cfg = replace(CFG, min_humans=60, max_humans=60, max_tries=5)
    with pytest.raises(GenerationError):
        generate_scene(0, cfg)


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        replace(CFG, rules="hold,dance").validate()
    with pytest.raises(ConfigError):
        replace(CFG, num_interactions=1).validate()
    with pytest.raises(ConfigError):
        replace(CFG, grid_h=1, grid_w=3).validate()


def test_rasterize_empty_scene_is_zero():
    f, _ = rasterize(Scene([], [], [], 3), replace(CFG, noise_sigma=0.0))
    assert f.shape == (256, 32) and not f.any()


def test_rasterize_peak_at_nearest_cell():
    cfg = replace(CFG, noise_sigma=0.0)
    for cx, cy in [(0.1, 0.1), (0.52, 0.33), (0.9, 0.71)]:
        f, _ = rasterize(Scene([Box(cx, cy, 0.1, 0.2)], [], [], 0), cfg)
        cell = int(np.argmax(np.linalg.norm(f, axis=1)))
        assert (cell // 16, cell % 16) == (min(int(cy * 16), 15), min(int(cx * 16), 15))


def test_positional_embedding_same_for_all_scenes():
    _, p1 = rasterize(generate_scene(1, CFG), CFG)
    _, p2 = rasterize(generate_scene(2, CFG), CFG)
    np.testing.assert_array_equal(p1, p2)


def test_rasterize_deterministic():
    s = generate_scene(9, CFG)
    np.testing.assert_array_equal(rasterize(s, CFG)[0], rasterize(s, CFG)[0])


def test_targets_group_triplets_by_pair():
    h, o = Box(0.5, 0.5, 0.2, 0.4), Box(0.5, 0.5, 0.1, 0.1)
    t = Scene([h], [(o, 2)], [(0, 0, 0), (0, 0, 5)]).targets(6)
    assert len(t) == 1 and t.interactions.tolist() == [[1, 0, 0, 0, 0, 1]] and t.object_labels.tolist() == [2]
    assert len(Scene([], [], []).targets(6)) == 0


def test_splits_disjoint_and_byte_identical(tmp_path):
    a = make_splits(CFG, 30, 10, 5, tmp_path / "a")
    b = make_splits(CFG, 30, 10, 5, tmp_path / "b")
    for name in ("train.jsonl", "val.jsonl", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    train, val = read_dataset(a.train), read_dataset(a.val)
    assert not {s.seed for s in train} & {s.seed for s in val}
    assert a.train_counts == interaction_counts(train, 6)
    assert a.rare == [c for c, n in enumerate(a.train_counts) if n < 10]
    header = json.loads(a.train.read_text().splitlines()[0])
    assert header == {"format": "hoi-synth", "version": 1}


def test_roundtrip_through_file(tmp_path):
    scenes = [generate_scene(i, CFG) for i in range(10)]
    write_dataset(tmp_path / "s.jsonl", scenes)
    assert read_dataset(tmp_path / "s.jsonl") == scenes


def test_bad_files_raise_data_error(tmp_path):
    with pytest.raises(DataError):
        read_dataset(tmp_path / "missing.jsonl")
    (tmp_path / "bad.jsonl").write_text('{"format": "other", "version": 1}\n')
    with pytest.raises(DataError):
        read_dataset(tmp_path / "bad.jsonl")
    (tmp_path / "bad2.jsonl").write_text('{"format": "hoi-synth", "version": 1}\n{"seed": 1, "humans": [[0.5]]}\n')
    with pytest.raises(DataError):
        read_dataset(tmp_path / "bad2.jsonl")


def test_rare_knob_makes_a_class_rare():
    cfg = replace(CFG, rare_interaction=1, rare_weight=0.02)
    counts = interaction_counts([generate_scene(i, cfg) for i in range(300)], 6)
    assert counts[1] < 10 and 1 in rare_classes(counts)
    base = interaction_counts([generate_scene(i, CFG) for i in range(300)], 6)
    assert base[1] > counts[1]

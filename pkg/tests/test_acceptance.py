"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that ``conftest.py`` prints in the terminal summary.
The desk-scale training check takes about ten minutes on one core.
"""
import json
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from grouped_hoi import cli
from grouped_hoi import numerics as nx
from grouped_hoi.config import build_config
from grouped_hoi.evaluation import average_precision
from grouped_hoi.geo_attention import GeoLayerParams, dispatch_matrix, geometric_layer
from grouped_hoi.geometry import Box, center_distance, iou, lowest_k
from grouped_hoi.gradcheck import run_gradcheck
from grouped_hoi.losses import combine_components, giou_loss
from grouped_hoi.matching import hungarian_match
from grouped_hoi.oracles import oracle_assignment, oracle_average_precision, oracle_knn
from grouped_hoi.sem_group import SemLayerParams, cosine_sim_matrix, select_semantic_neighbors, semantic_layer
from grouped_hoi.synth import make_splits
from grouped_hoi.training import train

FIXTURES = Path(__file__).parent / "fixtures"
RESULTS: list[str] = []

SMALL = """\
grid_h = 8
grid_w = 8
channels = 8
d_entity = 8
n_queries = 4
encoder_layers = 1
instance_decoder_layers = 1
interaction_decoder_layers = 1
n_train = 24
n_val = 8
batch_size = 4
epochs = 1
max_steps = 4
"""


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  criterion {n}: {detail}")
    assert ok, detail


def geo_cfg(k):
    return SimpleNamespace(k_geo=k, exclude_self=True, squared_distance=False, group_mode="intra",
                           pe_source="positional")


def boxes(rng, n):
    return np.column_stack([rng.uniform(0.2, 0.8, (n, 2)), rng.uniform(0.05, 0.3, (n, 2))])


def test_criterion_1_gradient_fidelity():
    t0 = time.perf_counter()
    rows = run_gradcheck(tol=1e-4, h=1e-4)
    secs = time.perf_counter() - t0
    worst = max(rows, key=lambda r: r.max_rel_err)
    ok = all(r.passed for r in rows) and worst.max_rel_err <= 1e-4 and secs <= 60
    record(1, ok, f"{len(rows)} cases, worst {worst.name} {worst.max_rel_err:.2e} (<= 1e-4), {secs:.1f}s (<= 60s)")


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad = []
    for _ in range(1000):
        n, k = int(rng.integers(1, 33)), int(rng.integers(1, 10))
        s = np.round(rng.random((n, n)), int(rng.integers(1, 4)))
        if [list(r) for r in lowest_k(s, k)] != oracle_knn(s, k):
            bad.append("geometric")
    for _ in range(1000):
        n, k = int(rng.integers(2, 17)), int(rng.integers(1, 6))
        q = rng.integers(-2, 3, size=(n, 4)).astype(float)  # small integers force ties
        sim = cosine_sim_matrix(q)
        if select_semantic_neighbors(sim, k).tolist() != oracle_knn(sim, k, True, descending=True):
            bad.append("semantic")
    for i in range(500):
        g = int(rng.integers(1, 8))
        q = g + int(rng.integers(0, 3))
        cost = rng.integers(0, 4, (g, q)).astype(float) if i % 2 else rng.normal(size=(g, q))
        got = hungarian_match(cost)
        perm, best = oracle_assignment(cost)
        if got.cost != pytest.approx(best, abs=1e-12) or got.gt_to_query != perm:
            bad.append("hungarian")
    worst_ap = 0.0
    for _ in range(1000):
        n = int(rng.integers(0, 30))
        flags = list(rng.random(n) < rng.random())
        n_gt = sum(flags) + int(rng.integers(0, 4))
        a, b = average_precision(flags, n_gt), oracle_average_precision(flags, n_gt)
        if (a is None) != (b is None):
            bad.append("ap")
        elif a is not None:
            worst_ap = max(worst_ap, abs(a - b))
    secs = time.perf_counter() - t0
    ok = not bad and worst_ap <= 1e-12 and secs <= 120
    record(2, ok, f"knn 2x1000 / hungarian 500 / AP 1000, mismatches {len(bad)}, "
                  f"max AP diff {worst_ap:.1e}, {secs:.1f}s (<= 120s)")


def test_criterion_3_structural_invariants():
    rng = np.random.default_rng(3)
    worst_sum = worst_perm = 0.0
    identity = scaling = True
    for trial in range(100):
        n, k, d = int(rng.integers(2, 12)), int(rng.integers(1, 5)), 6
        gp = GeoLayerParams(nx.ParamStore(trial), "geo", d)
        t = dispatch_matrix(nx.Tensor(rng.normal(size=(n, d)) * 3), rng.normal(size=(n, k, d)) * 3,
                            rng.normal(size=(n, k, d)), gp).data
        worst_sum = max(worst_sum, np.abs(t.sum(axis=-2) - 1).max())

        qh, qo, ph, po = (rng.normal(size=(n, d)) for _ in range(4))
        bh, bo = boxes(rng, n), boxes(rng, n)
        h1, o1 = geometric_layer(nx.Tensor(qh), nx.Tensor(qo), ph, po, bh, bo, gp, geo_cfg(k))
        perm = rng.permutation(n)
        h2, o2 = geometric_layer(nx.Tensor(qh[perm]), nx.Tensor(qo[perm]), ph[perm], po[perm], bh[perm], bo[perm],
                                 gp, geo_cfg(k))
        worst_perm = max(worst_perm, np.abs(h2.data - h1.data[perm]).max(), np.abs(o2.data - o1.data[perm]).max())

        sp = SemLayerParams(nx.ParamStore(trial), "sem", d, depth=2, norm="layer")
        qi = rng.normal(size=(n, d))
        a, b = semantic_layer(nx.Tensor(qi), k, sp).data, semantic_layer(nx.Tensor(qi[perm]), k, sp).data
        worst_perm = max(worst_perm, np.abs(b - a[perm]).max())

        gp.theta.weight.data[:] = 0.0
        gp.theta.bias.data[:] = 0.0
        h0, o0 = geometric_layer(nx.Tensor(qh), nx.Tensor(qo), ph, po, bh, bo, gp, geo_cfg(k))
        for layer in sp.phi5.linears:
            layer.weight.data[:] = 0.0
            layer.bias.data[:] = 0.0
        s0 = semantic_layer(nx.Tensor(qi), k, sp).data
        identity &= np.array_equal(h0.data, qh) and np.array_equal(o0.data, qo) and np.array_equal(s0, qi)

        scale = rng.uniform(0.01, 100.0, size=(n, 1))
        scaling &= np.array_equal(select_semantic_neighbors(cosine_sim_matrix(qi), k),
                                  select_semantic_neighbors(cosine_sim_matrix(qi * scale), k))
    ok = worst_sum <= 1e-9 and worst_perm <= 1e-9 and identity and scaling
    record(3, ok, f"dispatch sum err {worst_sum:.1e}, permutation err {worst_perm:.1e}, "
                  f"zero-weight identity {identity}, scaling invariance {scaling}")


def test_criterion_4_hand_values():
    cases = {
        "iou": (iou(Box(0.25, 0.25, 0.5, 0.5), Box(0.5, 0.5, 0.5, 0.5)), 1 / 7),
        "distance": (center_distance(Box(0.0, 0.0, 0.1, 0.1), Box(0.3, 0.4, 0.1, 0.1)), 0.5),
        "softmax": (nx.softmax(nx.Tensor([0.0, np.log(2.0)])).data[1], 2 / 3),
        "ap": (average_precision([True, False, True], 2), 5 / 6),
        "giou": (giou_loss(Box(0.25, 0.25, 0.5, 0.5), Box(0.5, 0.5, 0.5, 0.5)), 1 - (1 / 7 - 0.125 / 0.5625)),
        "lambda_sum": (combine_components({"box": 1.0, "giou": 1.0, "obj": 1.0, "int": 1.0}), 5.5),
    }
    errs = {k: abs(got - want) for k, (got, want) in cases.items()}
    ok = max(errs.values()) <= 1e-6 and round(cases["giou"][0], 4) == 1.0794 and round(cases["ap"][0], 4) == 0.8333
    record(4, ok, "max |err| " + f"{max(errs.values()):.1e} over " + ", ".join(cases))


@pytest.mark.slow
def test_criterion_5_desk_learning(tmp_path):
    cfg = build_config({})
    t0 = time.perf_counter()
    make_splits(cfg.synth, cfg.train.n_train, cfg.train.n_val, cfg.train.data_seed, tmp_path / "data")
    res = train(cfg, tmp_path / "data", tmp_path / "run")
    secs = time.perf_counter() - t0
    first, last = np.mean(res.losses[:10]), np.mean(res.losses[-10:])
    drop = 1 - last / first
    fixture = json.loads((FIXTURES / "desk_loss_curve.json").read_text())["loss"]
    same_curve = len(fixture) == len(res.losses) and np.allclose(res.losses, fixture, rtol=1e-6, atol=0)
    ok = res.steps <= 2000 and drop >= 0.5 and res.report.full >= 0.70 and secs <= 600 and same_curve
    record(5, ok, f"{res.steps} steps, loss {first:.3f} -> {last:.3f} (drop {drop:.1%} >= 50%), "
                  f"val mAP {res.report.full:.4f} (>= 0.70), {secs:.0f}s (<= 600s), matches fixture {same_curve}")


def test_criterion_6_sweep_tables(tmp_path):
    (tmp_path / "small.cfg").write_text(SMALL)
    base = ["--config", str(tmp_path / "small.cfg")]
    assert cli.main(["gen-data", *base, "--out", str(tmp_path / "data")]) == 0
    shapes = []
    for axis, values in (("Kg", ["2", "3", "4", "5"]), ("Ks", ["1", "2", "3", "4"])):
        out = tmp_path / axis
        code = cli.main(["sweep", *base, "--axis", axis, "--values", ",".join(values),
                         "--data", str(tmp_path / "data"), "--out", str(out)])
        rows = [r.split(",") for r in (out / f"sweep_{axis}.csv").read_text().splitlines()]
        shapes.append(code == 0 and rows[0] == [axis, "full", "rare", "non_rare"]
                      and [r[0] for r in rows[1:]] == values and all(len(r) == 4 for r in rows))
    record(6, all(shapes), "Kg in {2,3,4,5} and Ks in {1,2,3,4}: header + one 4-column row per value")


def test_criterion_7_determinism(tmp_path):
    (tmp_path / "small.cfg").write_text(SMALL)
    base = ["--config", str(tmp_path / "small.cfg")]
    for r in ("a", "b"):
        d = tmp_path / r
        assert cli.main(["gen-data", *base, "--out", str(d / "data")]) == 0
        assert cli.main(["train", *base, "--data", str(d / "data"), "--out", str(d / "run")]) == 0
        assert cli.main(["eval", *base, "--checkpoint", str(d / "run" / "model.ckpt"), "--data", str(d / "data"),
                         "--out", str(d / "eval")]) == 0
    files = ["data/train.jsonl", "data/val.jsonl", "data/meta.json", "run/train_log.jsonl", "run/model.ckpt",
             "eval/eval.csv"]
    differ = [f for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    record(7, not differ, f"bit-identical across two runs: {', '.join(files)}" + (f"; differ: {differ}" if differ else ""))

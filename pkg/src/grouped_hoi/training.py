"""Training loop, set matching, inference and validation for the HOI model on synthetic scenes."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .checkpoint import save_checkpoint
from .config import RunConfig
from .errors import NumericError
from .evaluation import EvalReport, Prediction, evaluate, pairwise_nms, predictions_from_output, scene_ground_truth
from .losses import PairTargets, hoi_loss, match_cost_matrix, proposal_loss
from .matching import Assignment, hungarian_match
from .model import HOIModel, ModelOutput, grid_centers
from .synth import Scene, cell_centers, interaction_counts, rare_classes, rasterize, read_dataset


@dataclass
class SceneSet:
    scenes: list[Scene]
    features: np.ndarray  # [N, HW, C]
    pos: np.ndarray  # [HW, d_entity]
    targets: list[PairTargets]
    centers: np.ndarray | None = None  # [HW, 2] token locations

    def __len__(self) -> int:
        return len(self.scenes)


def prepare_scenes(scenes: list[Scene], cfg: RunConfig) -> SceneSet:
    feats, pos = [], None
    for s in scenes:
        f, pos = rasterize(s, cfg.synth, cfg.model.d_entity)
        feats.append(f)
    if pos is None:
        _, pos = rasterize(Scene([], [], [], 0), cfg.synth, cfg.model.d_entity)
    feats = np.stack(feats) if feats else np.zeros((0, cfg.synth.grid_h * cfg.synth.grid_w, cfg.synth.channels))
    return SceneSet(scenes, feats, pos, [s.targets(cfg.synth.num_interactions) for s in scenes],
                    cell_centers(cfg.synth))


def load_split(path, cfg: RunConfig) -> SceneSet:
    return prepare_scenes(read_dataset(path), cfg)


# -- one optimisation step ---------------------------------------------------------------
def assign_targets(out: ModelOutput, targets: list[PairTargets], weights) -> list[Assignment]:
    """Per-scene Hungarian assignment of ground-truth pairs to query slots (no gradient)."""
    obj_prob = nx.softmax(out.obj_logits.data, axis=-1).data
    int_prob = nx.sigmoid(out.int_logits.data).data
    hb, ob = out.human_boxes.data, out.object_boxes.data
    result = []
    for b, tg in enumerate(targets):
        if len(tg) == 0:
            result.append(Assignment((), 0.0))
            continue
        cost = match_cost_matrix(hb[b], ob[b], obj_prob[b], int_prob[b], tg, weights)
        result.append(hungarian_match(cost))
    return result


def clip_gradients(store: nx.ParamStore, max_norm: float) -> float:
    grads = [t.grad for t in store.params.values() if t.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if not math.isfinite(total):
        raise NumericError("non-finite gradient norm")
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for t in store.params.values():
            if t.grad is not None:
                t.grad = t.grad * scale
    return total


def batch_loss(model: HOIModel, features: np.ndarray, pos: np.ndarray, targets: list[PairTargets],
               ablate: str = "none", centers: np.ndarray | None = None):
    """Forward pass plus the matched objective (with auxiliary decoder-layer terms)."""
    cfg = model.cfg
    out = model(features, pos, ablate, centers=centers)
    assignments = assign_targets(out, targets, cfg.match_weights)
    settings = cfg.loss_settings()
    res = hoi_loss(out, targets, assignments, settings)
    total = res.total
    for aux in out.aux:
        total = total + hoi_loss(aux, targets, assignments, settings).total
    comps = dict(res.components)
    if out.proposals:
        if centers is None:
            centers = grid_centers(out.proposals["logits"].shape[1])
        dense = proposal_loss(out.proposals["logits"], out.proposals["human"], out.proposals["object"],
                              targets, centers, settings)
        total = total + dense.total
        comps["proposal"] = float(dense.total.data)
    return total, comps


def train_step(model: HOIModel, features, pos, targets, lr: float, tcfg, centers=None) -> dict:
    model.store.zero_grad()
    total, comps = batch_loss(model, features, pos, targets, centers=centers)
    loss = float(total.data)
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    total.backward()
    grad_norm = clip_gradients(model.store, tcfg.grad_clip)
    nx.adamw_step(model.store, lr=lr, beta1=tcfg.beta1, beta2=tcfg.beta2, weight_decay=tcfg.weight_decay)
    return {"loss": loss, **comps, "grad_norm": grad_norm}


def learning_rate(tcfg, epoch: int) -> float:
    return tcfg.lr * tcfg.lr_gamma ** (epoch // tcfg.lr_drop_every)


# -- inference and evaluation -------------------------------------------------------------------
def predict(model: HOIModel, data: SceneSet, batch_size: int = 16, ablate: str = "none",
            nms_iou: float = 0.7, top_k: int = 100) -> list[list[Prediction]]:
    model.eval()
    out_preds = []
    with nx.no_grad():
        for start in range(0, len(data), batch_size):
            out = model(data.features[start:start + batch_size], data.pos, ablate, centers=data.centers)
            obj_prob = nx.softmax(out.obj_logits.data, axis=-1).data[..., :-1]
            int_prob = nx.sigmoid(out.int_logits.data).data
            for b in range(obj_prob.shape[0]):
                preds = predictions_from_output(out.human_boxes.data[b], out.object_boxes.data[b],
                                                obj_prob[b], int_prob[b])
                out_preds.append(pairwise_nms(preds, nms_iou, top_k))
    model.train()
    return out_preds


def evaluate_model(model: HOIModel, data: SceneSet, num_interactions: int, rare=(), ablate: str = "none",
                   nms_iou: float = 0.7, top_k: int = 100):
    preds = predict(model, data, ablate=ablate, nms_iou=nms_iou, top_k=top_k)
    report = evaluate(preds, [scene_ground_truth(s) for s in data.scenes], num_interactions, rare)
    return report, preds


# -- full run --------------------------------------------------------------------------------------
@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    val_maps: list = field(default_factory=list)
    steps: int = 0
    checkpoint: Path | None = None
    report: EvalReport | None = None
    seconds: float = 0.0
    model: object = None


class RunLog:
    """Line-delimited JSON; the first record carries the config hash and the config text."""

    def __init__(self, path, cfg: RunConfig):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.write({"config_hash": cfg.hash(), "config": cfg.text or cfg.canonical()})

    def write(self, rec: dict) -> None:
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def train(cfg: RunConfig, data_dir=None, out_dir=None, train_set: SceneSet | None = None,
          val_set: SceneSet | None = None, log_timing: bool = False) -> TrainResult:
    """Train from scratch; writes ``train_log.jsonl`` and ``model.ckpt`` into ``out_dir``."""
    tcfg = cfg.train
    data_dir = Path(data_dir or tcfg.data_dir)
    out_dir = Path(out_dir or tcfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = train_set or load_split(data_dir / "train.jsonl", cfg)
    val_set = val_set or load_split(data_dir / "val.jsonl", cfg)
    rare = rare_classes(interaction_counts(train_set.scenes, cfg.synth.num_interactions))
    model = HOIModel(cfg.model).train()
    rng = np.random.default_rng([tcfg.seed, 1])
    log = RunLog(out_dir / "train_log.jsonl", cfg)
    result = TrainResult()
    t0 = time.perf_counter()
    step = 0
    try:
        for epoch in range(tcfg.epochs):
            if step >= tcfg.max_steps:
                break
            lr = learning_rate(tcfg, epoch)
            order = rng.permutation(len(train_set))
            for start in range(0, len(order), tcfg.batch_size):
                if step >= tcfg.max_steps:
                    break
                idx = np.sort(order[start:start + tcfg.batch_size])
                rec = train_step(model, train_set.features[idx], train_set.pos,
                                 [train_set.targets[i] for i in idx], lr, tcfg, train_set.centers)
                step += 1
                result.losses.append(rec["loss"])
                log.write({"step": step, "epoch": epoch, "lr": lr, **rec})
            last = epoch == tcfg.epochs - 1 or step >= tcfg.max_steps
            if (epoch + 1) % tcfg.eval_every == 0 or last:
                report, _ = evaluate_model(model, val_set, cfg.synth.num_interactions, rare,
                                           nms_iou=tcfg.nms_iou, top_k=tcfg.top_k)
                result.val_maps.append(report.full)
                result.report = report
                rec = {"epoch": epoch, "step": step, "val_map": report.full, "val_rare": report.rare_map,
                       "val_non_rare": report.non_rare_map}
                if log_timing:
                    rec["elapsed"] = time.perf_counter() - t0
                log.write(rec)
    except (NumericError, FloatingPointError) as exc:
        log.write({"abort": str(exc), "step": step})
        log.close()
        raise NumericError(str(exc)) from exc
    result.steps = step
    result.checkpoint = out_dir / "model.ckpt"
    save_checkpoint(result.checkpoint, model.store, cfg.model.architecture(), cfg.hash(), {"step": step})
    log.write({"done": True, "steps": step})
    log.close()
    result.seconds = time.perf_counter() - t0
    result.model = model
    return result

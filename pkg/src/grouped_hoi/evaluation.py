"""Triplet detection protocol: pairwise NMS, greedy TP/FP matching, AP and Full/Rare mAP."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import Box, iou, pairwise_iou


@dataclass(frozen=True)
class Prediction:
    human: Box
    object: Box
    object_class: int
    interaction: int
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise DataError(f"prediction score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    human: Box
    object: Box
    object_class: int
    interaction: int


@dataclass
class EvalReport:
    ap: dict = field(default_factory=dict)  # class -> AP (only classes with GT)
    n_gt: dict = field(default_factory=dict)  # class -> number of GT triplets
    rare: tuple = ()
    full: float = 0.0
    rare_map: float | None = None
    non_rare_map: float | None = None

    def to_csv(self, num_classes: int | None = None) -> str:
        """``class_id,ap,n_gt,rare`` rows, then summary rows keyed ``full``/``rare``/``non_rare``."""
        classes = range(num_classes) if num_classes is not None else sorted(self.n_gt)
        lines = ["class_id,ap,n_gt,rare"]
        for c in classes:
            ap = f"{self.ap[c]:.6f}" if c in self.ap else ""
            lines.append(f"{c},{ap},{self.n_gt.get(c, 0)},{int(c in self.rare)}")
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        total = sum(self.n_gt.values())
        lines.append(f"full,{fmt(self.full)},{total},")
        lines.append(f"rare,{fmt(self.rare_map)},{sum(n for c, n in self.n_gt.items() if c in self.rare)},1")
        lines.append(f"non_rare,{fmt(self.non_rare_map)},"
                     f"{sum(n for c, n in self.n_gt.items() if c not in self.rare)},0")
        return "\n".join(lines) + "\n"


def pairwise_nms(preds: list[Prediction], iou_thr: float = 0.7, top_k: int = 100) -> list[Prediction]:
    """Greedy per-interaction suppression when both the human and object IoU exceed ``iou_thr``."""
    if not preds:
        return []
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    hb = np.array([preds[i].human.as_array() for i in order])
    ob = np.array([preds[i].object.as_array() for i in order])
    cls = np.array([preds[i].interaction for i in order])
    clash = (cls[:, None] == cls[None, :]) & (pairwise_iou(hb, hb) > iou_thr) & (pairwise_iou(ob, ob) > iou_thr)
    suppressed = np.zeros(len(order), dtype=bool)
    kept: list[Prediction] = []
    for r, i in enumerate(order):
        if suppressed[r]:
            continue
        kept.append(preds[i])
        if len(kept) >= top_k:
            break
        suppressed |= clash[r]
    return kept


def match_predictions(preds: list[Prediction], gts: list[GroundTruth], iou_thr: float = 0.5) -> list[bool]:
    """TP flag per prediction (in the given, score-sorted order).

    A prediction claims the unmatched same-interaction ground truth with the
    largest human+object IoU sum among those passing ``iou_thr`` on both boxes.
    """
    taken = [False] * len(gts)
    flags = []
    for p in preds:
        best, best_sum = -1, -1.0
        for g, gt in enumerate(gts):
            if taken[g] or gt.interaction != p.interaction:
                continue
            ih, io = iou(p.human, gt.human), iou(p.object, gt.object)
            if ih >= iou_thr and io >= iou_thr and ih + io > best_sum:
                best, best_sum = g, ih + io
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def average_precision(flags, n_gt: int, eleven_point: bool = False) -> float | None:
    """Area under the interpolated precision/recall curve; ``None`` when ``n_gt == 0``."""
    if n_gt <= 0:
        return None
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    if len(tp) == 0:
        return 0.0
    ranks = np.arange(1, len(tp) + 1)
    recall = tp / n_gt
    precision = tp / ranks
    if eleven_point:
        return float(np.mean([precision[recall >= t].max() if np.any(recall >= t) else 0.0
                              for t in np.linspace(0, 1, 11)]))
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_ap(class_ap: dict, rare_set, n_gt: dict | None = None) -> EvalReport:
    """Full/Rare/Non-Rare means over classes that have an AP; empty splits are ``None``."""
    rare = tuple(sorted(set(rare_set)))
    aps = {c: a for c, a in class_ap.items() if a is not None}
    mean = lambda vals: float(np.mean(vals)) if vals else None
    return EvalReport(
        ap=dict(sorted(aps.items())),
        n_gt=dict(sorted((n_gt or {c: 0 for c in aps}).items())),
        rare=rare,
        full=mean(list(aps.values())) or 0.0,
        rare_map=mean([a for c, a in aps.items() if c in rare]),
        non_rare_map=mean([a for c, a in aps.items() if c not in rare]),
    )


def evaluate(scene_preds: list[list[Prediction]], scene_gts: list[list[GroundTruth]], num_classes: int,
             rare_set=(), iou_thr: float = 0.5, eleven_point: bool = False) -> EvalReport:
    """Dataset-level AP per interaction class (predictions pooled over scenes, matched per scene)."""
    if len(scene_preds) != len(scene_gts):
        raise DataError("predictions and ground truth cover different numbers of scenes")
    records: dict[int, list] = {c: [] for c in range(num_classes)}
    n_gt = {c: 0 for c in range(num_classes)}
    for s, (preds, gts) in enumerate(zip(scene_preds, scene_gts)):
        for g in gts:
            n_gt[g.interaction] += 1
        for c in range(num_classes):
            ps = sorted((p for p in preds if p.interaction == c), key=lambda p: -p.score)
            gs = [g for g in gts if g.interaction == c]
            for p, f in zip(ps, match_predictions(ps, gs, iou_thr)):
                records[c].append((-p.score, s, f))
    class_ap = {}
    for c in range(num_classes):
        recs = sorted(records[c], key=lambda r: (r[0], r[1]))
        class_ap[c] = average_precision([r[2] for r in recs], n_gt[c], eleven_point)
    return mean_ap(class_ap, rare_set, n_gt)


def scene_ground_truth(scene) -> list[GroundTruth]:
    return [GroundTruth(scene.humans[h], scene.objects[o][0], scene.objects[o][1], a) for h, o, a in scene.triplets]


def predictions_from_output(human_boxes, object_boxes, obj_prob, int_prob, min_score: float = 0.0) -> list[Prediction]:
    """One candidate per (query, interaction) with score ``sigmoid(int) * max object prob``.

    ``obj_prob`` excludes the trailing no-object column.
    """
    preds = []
    cls = np.argmax(obj_prob, axis=-1)
    conf = obj_prob[np.arange(len(cls)), cls]
    for q in range(len(cls)):
        hb = Box.from_array(np.clip(human_boxes[q], 1e-6, 1.0))
        ob = Box.from_array(np.clip(object_boxes[q], 1e-6, 1.0))
        for a in range(int_prob.shape[-1]):
            s = float(int_prob[q, a] * conf[q])
            if s > min_score:
                preds.append(Prediction(hb, ob, int(cls[q]), a, s))
    return preds


def prediction_line(seed: int, p: Prediction) -> str:
    f = lambda b: ",".join(f"{v:.6f}" for v in (b.cx, b.cy, b.w, b.h))
    return (f'{{"seed":{seed},"human":[{f(p.human)}],"object":[{f(p.object)}],'
            f'"object_class":{p.object_class},"interaction":{p.interaction},"score":{p.score:.6f}}}')


def write_predictions(path, seeds: list[int], scene_preds: list[list[Prediction]]) -> None:
    lines = [prediction_line(s, p) for s, preds in zip(seeds, scene_preds) for p in preds]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")

"""Box and classification losses, the matching cost, and the composite HOI objective."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .geometry import Box, to_corners
from .matching import Assignment

# (box L1, GIoU, object CE, interaction) loss weights
DEFAULT_LOSS_WEIGHTS = (2.5, 1.0, 1.0, 1.0)
# (object class, interaction score, box L1, GIoU) matching weights
DEFAULT_MATCH_WEIGHTS = (1.0, 1.0, 2.5, 1.0)


@dataclass
class PairTargets:
    """Ground-truth human-object pairs of one scene with multi-hot interaction labels."""

    human_boxes: np.ndarray  # [G, 4]
    object_boxes: np.ndarray  # [G, 4]
    object_labels: np.ndarray  # [G]
    interactions: np.ndarray  # [G, C_a] in {0, 1}
    all_humans: np.ndarray | None = None  # every human in the scene, paired or not
    all_objects: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.object_labels)

    def entities(self) -> tuple[np.ndarray, np.ndarray]:
        """Human and object boxes to propose; the distinct paired boxes when the full lists are absent."""
        hum = self.all_humans if self.all_humans is not None else _unique_rows(self.human_boxes)
        obj = self.all_objects if self.all_objects is not None else _unique_rows(self.object_boxes)
        return hum.reshape(-1, 4), obj.reshape(-1, 4)


def _unique_rows(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    keep = [i for i in range(len(a)) if not any(np.array_equal(a[i], a[j]) for j in range(i))]
    return a[keep]


# -- numpy box helpers ------------------------------------------------------------
def generalized_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """GIoU between every box in ``a [n, 4]`` and ``b [m, 4]`` (cx, cy, w, h)."""
    ca, cb = to_corners(np.asarray(a, float))[:, None, :], to_corners(np.asarray(b, float))[None, :, :]
    lo = np.maximum(ca[..., :2], cb[..., :2])
    hi = np.minimum(ca[..., 2:], cb[..., 2:])
    inter = np.prod(np.clip(hi - lo, 0.0, None), axis=-1)
    area_a = np.prod(ca[..., 2:] - ca[..., :2], axis=-1)
    area_b = np.prod(cb[..., 2:] - cb[..., :2], axis=-1)
    union = area_a + area_b - inter
    hull = np.prod(np.maximum(ca[..., 2:], cb[..., 2:]) - np.minimum(ca[..., :2], cb[..., :2]), axis=-1)
    return inter / union - (hull - union) / hull


def giou_loss(a: Box, b: Box) -> float:
    """``1 - GIoU(a, b)``, in ``[0, 2]``."""
    for box in (a, b):
        if not isinstance(box, Box):
            Box.from_array(box)
    a = a.as_array() if isinstance(a, Box) else np.asarray(a, float)
    b = b.as_array() if isinstance(b, Box) else np.asarray(b, float)
    return float(1.0 - generalized_iou_matrix(a[None], b[None])[0, 0])


# -- differentiable pieces -------------------------------------------------------------
def _clip01(x):
    return nx.maximum(nx.minimum(x, 1.0), 0.0)


def giou_tensor(pred, target: np.ndarray):
    """Row-wise GIoU between predicted boxes (Tensor ``[m, 4]``) and fixed targets."""
    c, s = pred[..., 0:2], pred[..., 2:4]
    lo_p, hi_p = _clip01(c - s * 0.5), _clip01(c + s * 0.5)
    t = to_corners(target)
    lo_t, hi_t = t[..., :2], t[..., 2:]
    wh = nx.relu(nx.minimum(hi_p, hi_t) - nx.maximum(lo_p, lo_t))
    inter = wh[..., 0] * wh[..., 1]
    ext = hi_p - lo_p
    area_p = ext[..., 0] * ext[..., 1]
    area_t = np.prod(hi_t - lo_t, axis=-1)
    union = area_p + area_t - inter
    hull_wh = nx.maximum(hi_p, hi_t) - nx.minimum(lo_p, lo_t)
    hull = hull_wh[..., 0] * hull_wh[..., 1]
    return inter / union - (hull - union) / hull


def asymmetric_cls_loss(logits, targets, gamma_pos: float = 0.0, gamma_neg: float = 4.0, clip: float = 0.05):
    """Summed asymmetric multi-label loss.

    Positives: ``(1-p)^gamma_pos * log p``.  Negatives use the shifted
    probability ``p_m = max(p - clip, 0)``: ``p_m^gamma_neg * log(1 - p_m)``.
    """
    x = nx.as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    p = nx.sigmoid(x)
    pos = nx.log_sigmoid(x)
    if gamma_pos:
        pos = pos * nx.power(1.0 - p, gamma_pos)
    if clip > 0:
        p_m = nx.relu(p - clip)
        neg = nx.log(1.0 - p_m)
    else:
        p_m = p
        neg = nx.log_sigmoid(-x)
    if gamma_neg:
        neg = neg * nx.power(p_m, gamma_neg)
    return -nx.tsum(pos * y + neg * (1.0 - y))


def focal_loss(logits, targets, gamma: float = 2.0, alpha: float = 0.25):
    """Summed sigmoid focal loss."""
    x = nx.as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    p = nx.sigmoid(x)
    pos = nx.log_sigmoid(x) * nx.power(1.0 - p, gamma) * alpha
    neg = nx.log_sigmoid(-x) * nx.power(p, gamma) * (1.0 - alpha)
    return -nx.tsum(pos * y + neg * (1.0 - y))


def weighted_cross_entropy(logits, labels: np.ndarray, class_weight: np.ndarray):
    """Softmax CE averaged with per-class weights (``sum w_i ce_i / sum w_i``)."""
    logp = nx.log_softmax(logits, axis=-1)
    rows = np.arange(len(labels))
    w = class_weight[labels]
    return -nx.tsum(logp[rows, labels] * w) * (1.0 / w.sum())


# -- matching cost ----------------------------------------------------------------------
def interaction_score(int_prob: np.ndarray, gt_multi_hot: np.ndarray) -> np.ndarray:
    """Mean predicted probability over each ground truth's positive classes -> ``[G, Q]``."""
    pos = gt_multi_hot.sum(axis=1, keepdims=True)
    return (gt_multi_hot @ int_prob.T) / np.maximum(pos, 1.0)


def match_cost_matrix(human_boxes, object_boxes, obj_prob, int_prob, targets: PairTargets,
                      weights=DEFAULT_MATCH_WEIGHTS) -> np.ndarray:
    """Cost of assigning every ground-truth pair (rows) to every query (columns)."""
    w_cls, w_int, w_l1, w_giou = weights
    cost_cls = -obj_prob[:, targets.object_labels].T
    cost_int = -interaction_score(int_prob, targets.interactions)
    l1 = (np.abs(targets.human_boxes[:, None, :] - human_boxes[None]).sum(-1)
          + np.abs(targets.object_boxes[:, None, :] - object_boxes[None]).sum(-1))
    giou = (1.0 - generalized_iou_matrix(targets.human_boxes, human_boxes)) + (
        1.0 - generalized_iou_matrix(targets.object_boxes, object_boxes))
    return w_cls * cost_cls + w_int * cost_int + w_l1 * l1 + w_giou * giou


def match_cost(pred: dict, gt: dict, weights=DEFAULT_MATCH_WEIGHTS) -> float:
    """Cost of one prediction/ground-truth pair.

    ``pred``: ``human_box``, ``object_box``, ``obj_prob`` (incl. no-object),
    ``int_prob``.  ``gt``: ``human_box``, ``object_box``, ``object_label``,
    ``interactions`` (multi-hot).
    """
    targets = PairTargets(
        np.asarray(gt["human_box"], float)[None], np.asarray(gt["object_box"], float)[None],
        np.array([gt["object_label"]]), np.asarray(gt["interactions"], float)[None],
    )
    m = match_cost_matrix(np.asarray(pred["human_box"], float)[None], np.asarray(pred["object_box"], float)[None],
                          np.asarray(pred["obj_prob"], float)[None], np.asarray(pred["int_prob"], float)[None],
                          targets, weights)
    return float(m[0, 0])


# -- composite objective -------------------------------------------------------------------
@dataclass
class LossSettings:
    weights: tuple = DEFAULT_LOSS_WEIGHTS
    cls_loss: str = "asl"
    asl_gamma_pos: float = 0.0
    asl_gamma_neg: float = 4.0
    asl_clip: float = 0.05
    eos_coef: float = 0.1


@dataclass
class LossResult:
    total: nx.Tensor
    components: dict = field(default_factory=dict)


def combine_components(components: dict, weights=DEFAULT_LOSS_WEIGHTS):
    """``lambda_b*box + lambda_u*giou + lambda_o*obj + lambda_a*int``; works on floats or Tensors."""
    lb, lu, lo, la = weights
    return components["box"] * lb + components["giou"] * lu + components["obj"] * lo + components["int"] * la


def interaction_loss(logits, targets: np.ndarray, settings: LossSettings):
    if settings.cls_loss == "asl":
        return asymmetric_cls_loss(logits, targets, settings.asl_gamma_pos, settings.asl_gamma_neg, settings.asl_clip)
    if settings.cls_loss == "focal":
        return focal_loss(logits, targets)
    if settings.cls_loss == "bce":
        return asymmetric_cls_loss(logits, targets, 0.0, 0.0, 0.0)
    raise ValueError(f"unknown classification loss {settings.cls_loss!r}")


def hoi_loss(output, targets: list[PairTargets], assignments: list[Assignment],
             settings: LossSettings = LossSettings()) -> LossResult:
    """Weighted sum of box L1, GIoU, object CE and interaction loss over a batch.

    ``output`` carries batched tensors ``human_boxes``/``object_boxes`` ``[B, Q, 4]``,
    ``obj_logits`` ``[B, Q, C_o + 1]`` and ``int_logits`` ``[B, Q, C_a]``.  Box and
    interaction terms run over matched queries only and are divided by the
    number of ground-truth pairs; every query enters the object CE, with
    unmatched ones labelled "no object".
    """
    B, Q = output.obj_logits.shape[:2]
    n_cls = output.obj_logits.shape[-1]
    no_object = n_cls - 1
    labels = np.full(B * Q, no_object, dtype=np.int64)
    rows, gt_h, gt_o, gt_int = [], [], [], []
    for b, (tg, asg) in enumerate(zip(targets, assignments)):
        for g, q in asg.pairs:
            rows.append(b * Q + q)
            labels[b * Q + q] = tg.object_labels[g]
            gt_h.append(tg.human_boxes[g])
            gt_o.append(tg.object_boxes[g])
            gt_int.append(tg.interactions[g])
    class_weight = np.ones(n_cls)
    class_weight[no_object] = settings.eos_coef
    obj = weighted_cross_entropy(nx.reshape(output.obj_logits, (B * Q, n_cls)), labels, class_weight)
    n_pairs = len(rows)
    if n_pairs == 0:
        zero = nx.Tensor(0.0)
        comps = {"box": zero, "giou": zero, "int": zero, "obj": obj}
    else:
        rows = np.array(rows)
        norm = 1.0 / n_pairs
        ph = nx.reshape(output.human_boxes, (B * Q, 4))[rows]
        po = nx.reshape(output.object_boxes, (B * Q, 4))[rows]
        gt_h, gt_o = np.array(gt_h), np.array(gt_o)
        box = (nx.tsum(nx.absolute(ph - gt_h)) + nx.tsum(nx.absolute(po - gt_o))) * norm
        giou = nx.tsum((1.0 - giou_tensor(ph, gt_h)) + (1.0 - giou_tensor(po, gt_o))) * norm
        if output.int_logits is None:
            inter = nx.Tensor(0.0)
        else:
            logits = nx.reshape(output.int_logits, (B * Q, output.int_logits.shape[-1]))[rows]
            inter = interaction_loss(logits, np.array(gt_int), settings)
        comps = {"box": box, "giou": giou, "int": inter * norm, "obj": obj}
    total = combine_components(comps, settings.weights)
    return LossResult(total, {k: float(v.data) for k, v in comps.items()})


def nearest_tokens(boxes: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the token centre closest to each box centre (lowest index on ties)."""
    if len(boxes) == 0:
        return np.zeros(0, dtype=np.int64)
    d2 = ((boxes[:, None, :2] - centers[None]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def proposal_loss(logits, human_boxes, object_boxes, targets: list[PairTargets], centers: np.ndarray,
                  settings: LossSettings = LossSettings()) -> LossResult:
    """Dense per-token objective of the proposal heads.

    The token nearest each entity centre is that entity's positive; every other
    token is a negative for that kind.  ``logits`` ``[B, T, 2]`` score human then
    object; the box maps ``[B, T, 4]`` are regressed at the positives only.
    Focal, L1 and GIoU terms are divided by the number of entities.
    """
    B, T = logits.shape[:2]
    y = np.zeros((B, T, 2))
    rows, gts = ([], []), ([], [])
    for b, tg in enumerate(targets):
        for kind, boxes in enumerate(tg.entities()):
            idx = nearest_tokens(boxes, centers)
            y[b, idx, kind] = 1.0
            rows[kind].extend(b * T + idx)
            gts[kind].extend(boxes)
    n = max(len(rows[0]) + len(rows[1]), 1)
    cls = focal_loss(logits, y) * (1.0 / n)
    box, giou = nx.Tensor(0.0), nx.Tensor(0.0)
    for kind, pred in enumerate((human_boxes, object_boxes)):
        if not rows[kind]:
            continue
        p = nx.reshape(pred, (B * T, 4))[np.array(rows[kind])]
        g = np.array(gts[kind])
        box = box + nx.tsum(nx.absolute(p - g)) * (1.0 / n)
        giou = giou + nx.tsum(1.0 - giou_tensor(p, g)) * (1.0 / n)
    comps = {"box": box, "giou": giou, "obj": cls, "int": nx.Tensor(0.0)}
    total = combine_components(comps, settings.weights)
    return LossResult(total, {k: float(v.data) for k, v in comps.items()})

"""Box math, pairwise spatial features and geometric neighbour selection.

Boxes are normalised ``(cx, cy, w, h)``.  Array helpers take ``[..., 4]``
arrays so the model can build groups for a whole batch at once; the
``Box``-level functions are thin wrappers over the same code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoxError, ConfigError

# proximity estimator init: lower score = nearer and more overlapping
DEFAULT_PROXIMITY = (1.0, -1.0, 0.0)


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise BoxError(f"degenerate box w={self.w} h={self.h}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise BoxError(f"box centre ({self.cx}, {self.cy}) outside the unit frame")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Box":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class SpatialFeature:
    dis: float
    iou: float


def boxes_to_array(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.astype(np.float64, copy=False)
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.stack([b.as_array() for b in boxes])


def to_corners(b: np.ndarray) -> np.ndarray:
    """``[..., (cx, cy, w, h)]`` -> ``[..., (x0, y0, x1, y1)]`` clamped to the unit frame."""
    c = np.concatenate([b[..., :2] - b[..., 2:] / 2, b[..., :2] + b[..., 2:] / 2], axis=-1)
    return np.clip(c, 0.0, 1.0)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU between every box of ``a [..., n, 4]`` and ``b [..., m, 4]`` -> ``[..., n, m]``."""
    ca, cb = to_corners(a)[..., :, None, :], to_corners(b)[..., None, :, :]
    iw = np.clip(np.minimum(ca[..., 2], cb[..., 2]) - np.maximum(ca[..., 0], cb[..., 0]), 0.0, None)
    ih = np.clip(np.minimum(ca[..., 3], cb[..., 3]) - np.maximum(ca[..., 1], cb[..., 1]), 0.0, None)
    inter = iw * ih
    area_a = (ca[..., 2] - ca[..., 0]) * (ca[..., 3] - ca[..., 1])
    area_b = (cb[..., 2] - cb[..., 0]) * (cb[..., 3] - cb[..., 1])
    union = area_a + area_b - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def pairwise_center_distance(a: np.ndarray, b: np.ndarray, squared: bool = False) -> np.ndarray:
    dx = a[..., :, None, 0] - b[..., None, :, 0]
    dy = a[..., :, None, 1] - b[..., None, :, 1]
    d2 = dx * dx + dy * dy
    return d2 if squared else np.sqrt(d2)


def _check(b: Box) -> np.ndarray:
    if not isinstance(b, Box):
        b = Box.from_array(b)
    return b.as_array()[None]


def iou(a: Box, b: Box) -> float:
    return float(pairwise_iou(_check(a), _check(b))[0, 0])


def center_distance(a: Box, b: Box) -> float:
    return float(pairwise_center_distance(_check(a), _check(b))[0, 0])


def spatial_feature(a: Box, b: Box) -> SpatialFeature:
    return SpatialFeature(center_distance(a, b), iou(a, b))


def pairwise_spatial_features(boxes: np.ndarray, squared_distance: bool = False):
    """``(dis, iou)`` matrices for all pairs within ``boxes [..., n, 4]``."""
    return (
        pairwise_center_distance(boxes, boxes, squared=squared_distance),
        pairwise_iou(boxes, boxes),
    )


def proximity_scores(boxes, weights=DEFAULT_PROXIMITY, squared_distance: bool = False) -> np.ndarray:
    """Linear proximity score ``w_dis*dis + w_iou*iou + bias`` for every pair; lower is closer."""
    arr = boxes_to_array(boxes)
    if arr.shape[-2] < 1:
        raise ValueError("proximity_scores needs at least one box")
    w_dis, w_iou, bias = (float(w) for w in weights)
    dis, ov = pairwise_spatial_features(arr, squared_distance)
    return w_dis * dis + w_iou * ov + bias


def lowest_k(scores: np.ndarray, k: int, exclude_self: bool = True) -> np.ndarray:
    """Indices of the ``k`` lowest entries per row of ``scores [..., n, n]``.

    Ties go to the lower column index.  Returns ``[..., n, min(k, candidates)]``.
    """
    if k <= 0:
        raise ConfigError(f"group size must be positive, got {k}")
    s = np.array(scores, dtype=np.float64)
    n = s.shape[-1]
    if s.shape[-2] != n:
        raise ValueError(f"score matrix must be square, got {s.shape}")
    if exclude_self:
        s[..., np.arange(n), np.arange(n)] = np.inf
    k_eff = min(k, n - 1 if exclude_self else n)
    order = np.argsort(s, axis=-1, kind="stable")
    return order[..., :k_eff]


def select_geometric_neighbors(scores, k: int, exclude_self: bool = True, class_mask=None) -> list[np.ndarray]:
    """Per-row indices of the ``k`` admissible columns with the lowest score.

    ``class_mask[i][j]`` (optional, boolean) marks column ``j`` admissible for
    row ``i``.  Rows with fewer than ``k`` candidates return all of them.
    """
    if k <= 0:
        raise ConfigError(f"K^g must be positive, got {k}")
    s = np.asarray(scores, dtype=np.float64)
    n = s.shape[0]
    if s.ndim != 2 or s.shape[1] != n:
        raise ValueError(f"score matrix must be square, got {s.shape}")
    admissible = np.ones((n, n), dtype=bool) if class_mask is None else np.asarray(class_mask, dtype=bool)
    if exclude_self:
        admissible = admissible.copy()
        np.fill_diagonal(admissible, False)
    groups = []
    for i in range(n):
        cand = np.flatnonzero(admissible[i])
        order = cand[np.argsort(s[i, cand], kind="stable")]
        groups.append(order[:k])
    return groups


def sine_embed_points(xy: np.ndarray, d: int, temperature: float = 10000.0) -> np.ndarray:
    """Sinusoidal code ``[..., d]`` of normalised ``(x, y)`` points: first half encodes y, second half x."""
    if d % 4:
        raise ConfigError(f"positional width {d} must be divisible by 4")
    xy = np.asarray(xy, dtype=np.float64)
    npf = d // 2
    dim_t = temperature ** (2 * (np.arange(npf) // 2) / npf)

    def enc(v):
        p = v[..., None] * (2 * math.pi) / dim_t
        out = np.empty_like(p)
        out[..., 0::2] = np.sin(p[..., 0::2])
        out[..., 1::2] = np.cos(p[..., 1::2])
        return out

    return np.concatenate([enc(xy[..., 1]), enc(xy[..., 0])], axis=-1)

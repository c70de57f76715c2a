"""Set-prediction HOI network with geometric and semantic grouping.

Pipeline per scene: input projection + encoder over the feature grid; an
instance decoder whose layers run (geometric layer -> self-attention ->
cross-attention -> FFN) on the concatenated human/object queries; interaction
queries initialised from the mean of paired human/object outputs (tiled x3);
an interaction decoder whose layers run (semantic layer -> self-attention ->
cross-attention -> FFN).  Human query ``i`` and object query ``i`` form pair
slot ``i``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numerics as nx
from .errors import ConfigError
from .geometry import sine_embed_points
from .geo_attention import GeoLayerParams, geometric_layer
from .layers import Attention, FeedForward, LayerNorm, Linear, Mlp
from .losses import LossSettings
from .sem_group import SemLayerParams, semantic_layer

TILE = 3  # interaction width = 3 x entity width
ANCHOR_SIZE = 0.2
PROPOSAL_SIZE = 0.1  # box size each token's proposal regresses from
BOX_EPS = 1e-6  # boxes stay this far inside (0, 1) even when the sigmoid saturates


def unit_box(x):
    """Sigmoid squashed into ``[BOX_EPS, 1 - BOX_EPS]``."""
    return nx.sigmoid(x) * (1.0 - 2 * BOX_EPS) + BOX_EPS


def anchor_logits(n: int, size: float = ANCHOR_SIZE) -> np.ndarray:
    """``[n, 4]`` pre-sigmoid boxes with centres on an even grid and a common size."""
    side = int(np.ceil(np.sqrt(n)))
    k = np.arange(n)
    cx, cy = (k % side + 0.5) / side, (k // side + 0.5) / side
    boxes = np.stack([cx, cy, np.full(n, size), np.full(n, size)], axis=1)
    return np.log(boxes / (1 - boxes))


def sine_embed(xy, d: int, temperature: float = 10000.0):
    """Differentiable twin of :func:`sine_embed_points` (cosine taken as a quarter-turn sine)."""
    xy = nx.as_tensor(xy)
    npf = d // 2
    freq = 2 * np.pi / temperature ** (2 * (np.arange(npf) // 2) / npf)
    phase = np.where(np.arange(npf) % 2 == 1, np.pi / 2, 0.0)
    parts = [nx.sin(xy[..., axis:axis + 1] * freq + phase) for axis in (1, 0)]
    return nx.concat(parts, axis=-1)


@dataclass
class ModelConfig:
    d_entity: int = 32
    feature_dim: int = 32
    n_queries: int = 16
    encoder_layers: int = 2
    instance_decoder_layers: int = 2
    interaction_decoder_layers: int = 2
    heads: int = 2
    ffn_mult: int = 2
    num_object_classes: int = 5
    num_interactions: int = 6
    k_geo: int = 4
    k_sem: int = 2
    use_geo: bool = True
    use_sem: bool = True
    geo_layers: int = -1  # -1: every instance-decoder layer; else the last N layers
    sem_layers: int = -1  # -1: every interaction-decoder layer; else the first N layers
    group_mode: str = "intra"
    pe_source: str = "positional"
    exclude_self: bool = True
    squared_distance: bool = False
    sem_norm: str = "layer"
    sem_depth: int = 2
    lambda_box: float = 2.5
    lambda_giou: float = 1.0
    lambda_obj: float = 1.0
    lambda_int: float = 1.0
    cls_loss: str = "asl"
    asl_gamma_pos: float = 0.0
    asl_gamma_neg: float = 4.0
    asl_clip: float = 0.05
    eos_coef: float = 0.1
    match_cls: float = 1.0
    match_int: float = 1.0
    match_l1: float = 2.5
    match_giou: float = 1.0
    aux_loss: bool = True
    attn_prior: float = 1.0  # std of the cross-attention spatial prior in box sizes; 0 disables it
    query_init: str = "proposal"  # "proposal": pair grid of encoder proposals; "learned": free anchors
    init_seed: int = 0

    @property
    def d_interaction(self) -> int:
        return TILE * self.d_entity

    @classmethod
    def full_size(cls, **overrides) -> "ModelConfig":
        """Full-size architecture: 256/768 widths, 64 queries, 6/3/3 layers, 8 heads."""
        base = dict(d_entity=256, feature_dim=256, n_queries=64, encoder_layers=6,
                    instance_decoder_layers=3, interaction_decoder_layers=3, heads=8, ffn_mult=8)
        base.update(overrides)
        return cls(**base)

    def validate(self) -> "ModelConfig":
        if self.k_geo <= 0 or self.k_sem <= 0:
            raise ConfigError("group sizes k_geo and k_sem must be positive")
        if self.d_entity % self.heads or self.d_interaction % self.heads:
            raise ConfigError(f"d_entity={self.d_entity} must be divisible by heads={self.heads}")
        if self.group_mode not in ("intra", "mixed"):
            raise ConfigError(f"group_mode must be 'intra' or 'mixed', got {self.group_mode!r}")
        if self.pe_source not in ("positional", "content"):
            raise ConfigError(f"pe_source must be 'positional' or 'content', got {self.pe_source!r}")
        if self.sem_norm not in ("layer", "batch"):
            raise ConfigError(f"sem_norm must be 'layer' or 'batch', got {self.sem_norm!r}")
        if self.cls_loss not in ("asl", "focal", "bce"):
            raise ConfigError(f"cls_loss must be asl, focal or bce, got {self.cls_loss!r}")
        if self.geo_layers > self.instance_decoder_layers or self.geo_layers < -1:
            raise ConfigError(f"geo_layers={self.geo_layers} exceeds {self.instance_decoder_layers} decoder layers")
        if self.sem_layers > self.interaction_decoder_layers or self.sem_layers < -1:
            raise ConfigError(f"sem_layers={self.sem_layers} exceeds {self.interaction_decoder_layers} decoder layers")
        for name in ("encoder_layers", "instance_decoder_layers", "interaction_decoder_layers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_queries < 1:
            raise ConfigError("n_queries must be >= 1")
        if self.query_init not in ("proposal", "learned"):
            raise ConfigError(f"query_init must be 'proposal' or 'learned', got {self.query_init!r}")
        return self

    def loss_settings(self) -> LossSettings:
        return LossSettings((self.lambda_box, self.lambda_giou, self.lambda_obj, self.lambda_int),
                            self.cls_loss, self.asl_gamma_pos, self.asl_gamma_neg, self.asl_clip, self.eos_coef)

    @property
    def match_weights(self) -> tuple:
        return (self.match_cls, self.match_int, self.match_l1, self.match_giou)

    def architecture(self) -> dict:
        """Keys that fix parameter shapes; a checkpoint is only loadable under identical values."""
        keys = ("d_entity", "feature_dim", "n_queries", "encoder_layers", "instance_decoder_layers",
                "interaction_decoder_layers", "heads", "ffn_mult", "num_object_classes",
                "num_interactions", "sem_norm", "sem_depth", "query_init")
        return {k: getattr(self, k) for k in keys}


@dataclass
class ModelOutput:
    human_boxes: nx.Tensor  # [B, Q, 4], strictly inside (0, 1)
    object_boxes: nx.Tensor  # [B, Q, 4]
    obj_logits: nx.Tensor  # [B, Q, C_o + 1]; last column is "no object"
    int_logits: nx.Tensor  # [B, Q, C_a]
    aux: list = field(default_factory=list)  # intermediate instance-decoder predictions
    groups: dict = field(default_factory=dict)
    proposals: dict = field(default_factory=dict)  # dense "logits", "human", "object" maps when proposing


@dataclass
class AuxOutput:
    human_boxes: nx.Tensor
    object_boxes: nx.Tensor
    obj_logits: nx.Tensor
    int_logits: nx.Tensor | None = None


def grid_centers(n_tokens: int) -> np.ndarray:
    """``(x, y)`` centres of a square row-major grid with ``n_tokens`` cells."""
    side = int(round(np.sqrt(n_tokens)))
    if side * side != n_tokens:
        raise ConfigError(f"{n_tokens} tokens do not form a square grid; pass token centres explicitly")
    ys, xs = np.meshgrid((np.arange(side) + 0.5) / side, (np.arange(side) + 0.5) / side, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def pair_grid(n_queries: int) -> tuple[int, int]:
    """``(humans, objects)`` proposal counts whose product is ``n_queries``, as close to square as possible."""
    n_h = max(k for k in range(1, int(np.sqrt(n_queries)) + 1) if n_queries % k == 0)
    return n_h, n_queries // n_h


def select_peaks(scores: np.ndarray, centers: np.ndarray, k: int, radius: float) -> np.ndarray:
    """Indices of ``k`` high-scoring tokens, greedily skipping any within ``radius`` (max-norm) of a pick.

    Suppressed tokens fill the remaining slots, best first, when too few peaks exist.
    """
    order = np.argsort(-scores, kind="stable")
    picked, skipped = [], []
    for i in order:
        if len(picked) == k:
            break
        if any(np.abs(centers[i] - centers[j]).max() < radius for j in picked):
            skipped.append(i)
        else:
            picked.append(i)
    picked += skipped[:k - len(picked)]
    return np.array(picked, dtype=np.int64)


def token_spacing(centers: np.ndarray) -> float:
    xs = np.unique(centers[:, 0])
    return float(np.diff(xs).min()) if len(xs) > 1 else 1.0


def spatial_prior(boxes, centers: np.ndarray, scale: float):
    """Log-Gaussian score ``[..., n, m]`` of each token centre under each box (std = scale x box size)."""
    boxes = nx.as_tensor(boxes)
    dx = nx.sub(centers[:, 0], boxes[..., 0:1]) / (boxes[..., 2:3] * scale)
    dy = nx.sub(centers[:, 1], boxes[..., 1:2]) / (boxes[..., 3:4] * scale)
    return (dx * dx + dy * dy) * -0.5


def pair_geometry(human_boxes, object_boxes):
    """``[..., 12]`` layout code of each human/object box pair: both boxes, then the object's
    centre offset and size, both relative to the human box."""
    hb, ob = nx.as_tensor(human_boxes), nx.as_tensor(object_boxes)
    rel = (ob[..., 0:2] - hb[..., 0:2]) / hb[..., 2:4]
    scale = ob[..., 2:4] / hb[..., 2:4]
    return nx.concat([hb, ob, rel, scale], axis=-1)


def init_interaction_queries(Q_h, Q_o):
    """Mean of paired human/object embeddings, tiled three times along the channel axis."""
    Q_h, Q_o = nx.as_tensor(Q_h), nx.as_tensor(Q_o)
    if Q_h.shape != Q_o.shape:
        raise nx.DimensionError(f"human/object query sets differ: {Q_h.shape} vs {Q_o.shape}")
    mid = (Q_h + Q_o) * 0.5
    return nx.concat([mid] * TILE, axis=-1)


def tile_channels(x):
    return nx.concat([nx.as_tensor(x)] * TILE, axis=-1)


class EncoderLayer:
    def __init__(self, store, name, d, heads, hidden):
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.attn = Attention(store, f"{name}.attn", d, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.ffn = FeedForward(store, f"{name}.ffn", d, hidden)

    def __call__(self, x, pos):
        h = self.norm1(x)
        x = x + self.attn(h + pos, h + pos, h)
        return x + self.ffn(self.norm2(x))


def location_readout(weights, ref, centers: np.ndarray):
    """Attention-weighted mean token location relative to each reference box, in box units.

    ``weights``: ``[B, heads, n, m]``; ``ref``: boxes ``[B, n, 4]``; returns ``[B, n, 2 * heads]``.
    """
    mean_xy = nx.swapaxes(nx.matmul(weights, centers), -2, -3)  # [B, n, heads, 2]
    ref = nx.as_tensor(ref)
    shape = ref.shape[:-1] + (1, 2)
    rel = (mean_xy - nx.reshape(ref[..., 0:2], shape)) / nx.reshape(ref[..., 2:4], shape)
    return nx.reshape(rel, rel.shape[:-2] + (rel.shape[-2] * 2,))


class DecoderLayer:
    """Pre-norm self-attention, cross-attention and FFN, each with a residual.

    With ``readout`` the layer also feeds :func:`location_readout` of its
    cross-attention back into the residual stream through a linear map.
    """

    def __init__(self, store, name, d, heads, hidden, d_memory=None, readout: bool = False):
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.self_attn = Attention(store, f"{name}.self_attn", d, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.cross_attn = Attention(store, f"{name}.cross_attn", d, heads, d_kv=d_memory)
        self.norm3 = LayerNorm(store, f"{name}.norm3", d)
        self.ffn = FeedForward(store, f"{name}.ffn", d, hidden)
        self.readout = Linear(store, f"{name}.readout", 2 * heads, d) if readout else None

    def __call__(self, x, query_pos, memory, memory_pos, memory_bias=None, ref=None, centers=None):
        h = self.norm1(x)
        x = x + self.self_attn(h + query_pos, h + query_pos, h)
        h = self.norm2(x)
        att, w = self.cross_attn(h + query_pos, memory + memory_pos, memory, memory_bias, return_weights=True)
        x = x + att
        if self.readout is not None and ref is not None:
            x = x + self.readout(location_readout(w, ref, centers))
        return x + self.ffn(self.norm3(x))


class HOIModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg.validate()
        d, di, Q = cfg.d_entity, cfg.d_interaction, cfg.n_queries
        s = self.store = nx.ParamStore(cfg.init_seed)
        self.input_proj = Linear(s, "input_proj", cfg.feature_dim, d)
        self.encoder = [EncoderLayer(s, f"enc.{i}", d, cfg.heads, cfg.ffn_mult * d) for i in range(cfg.encoder_layers)]
        self.query_h = s.add("query.human", (Q, d), fan_in=d)
        self.query_o = s.add("query.object", (Q, d), fan_in=d)
        self.pos_h = s.add("query_pos.human", (Q, d), fan_in=d)
        self.pos_o = s.add("query_pos.object", (Q, d), fan_in=d)
        if cfg.query_init == "learned":
            self.anchor_h = s.add("anchor.human", (Q, 4), value=anchor_logits(Q))
            self.anchor_o = s.add("anchor.object", (Q, 4), value=anchor_logits(Q))
        else:
            self.prop_norm = LayerNorm(s, "proposal.norm", d)
            self.prop_cls = Linear(s, "proposal.class", d, 2)
            self.prop_box_h = Mlp(s, "proposal.human_box", [d, d, 4])
            self.prop_box_o = Mlp(s, "proposal.object_box", [d, d, 4])
            self.ins_pair_h = Linear(s, "ins.pair_geometry.human", 12, d)
            self.ins_pair_o = Linear(s, "ins.pair_geometry.object", 12, d)
        L = cfg.instance_decoder_layers
        self.geo = [GeoLayerParams(s, f"ins.{i}.geo", d) for i in range(L)]
        self.ins_layers = [DecoderLayer(s, f"ins.{i}", d, cfg.heads, cfg.ffn_mult * d, readout=True)
                           for i in range(L)]
        self.ins_norm = LayerNorm(s, "ins.norm", d)
        self.box_h = Linear(s, "head.human_box", d, 4)
        self.box_o = Linear(s, "head.object_box", d, 4)
        self.obj_cls = Linear(s, "head.object_class", d, cfg.num_object_classes + 1)
        self.memory_proj = Linear(s, "int.memory_proj", d, di)
        M = cfg.interaction_decoder_layers
        self.sem = [SemLayerParams(s, f"int.{i}.sem", di, cfg.sem_depth, cfg.sem_norm) for i in range(M)]
        self.int_layers = [DecoderLayer(s, f"int.{i}", di, cfg.heads, cfg.ffn_mult * di) for i in range(M)]
        self.int_norm = LayerNorm(s, "int.norm", di)
        self.int_cls = Linear(s, "head.interaction", di, cfg.num_interactions)
        self.pair_embed = Linear(s, "int.pair_geometry", 12, di)
        self.training = True

    # -- bookkeeping --------------------------------------------------------------
    def train(self, flag: bool = True) -> "HOIModel":
        self.training = flag
        for sem in self.sem:
            sem.set_training(flag)
        return self

    def eval(self) -> "HOIModel":
        return self.train(False)

    def num_params(self) -> int:
        return self.store.num_params()

    def _geo_active(self, layer: int, ablate: str) -> bool:
        if not self.cfg.use_geo or ablate == "no-geo":
            return False
        n = self.cfg.geo_layers
        return n < 0 or layer >= self.cfg.instance_decoder_layers - n

    def _sem_active(self, layer: int, ablate: str) -> bool:
        if not self.cfg.use_sem or ablate == "no-sem":
            return False
        n = self.cfg.sem_layers
        return n < 0 or layer < n

    # -- stages -----------------------------------------------------------------
    def encode_scene(self, features, pos):
        """Input projection, then the encoder stack; position joins queries and keys only."""
        x = self.input_proj(features)
        for layer in self.encoder:
            x = layer(x, pos)
        return x

    def heads(self, x_h, x_o, ref_h, ref_o):
        """Box heads refine the pre-sigmoid reference boxes; the class head reads the object embedding."""
        h, o = self.ins_norm(x_h), self.ins_norm(x_o)
        return unit_box(self.box_h(h) + ref_h), unit_box(self.box_o(o) + ref_o), self.obj_cls(o)

    def _query_pos(self, learned, ref):
        return learned + sine_embed(unit_box(ref[..., :2]), self.cfg.d_entity)

    @staticmethod
    def _logit(box):
        return nx.log(box) - nx.log(1.0 - box)

    def _prior(self, boxes, centers):
        return None if self.cfg.attn_prior <= 0 else spatial_prior(boxes, centers, self.cfg.attn_prior)

    def propose(self, memory, centers: np.ndarray):
        """Dense human/object scores and boxes for every token, each box relative to its token's cell."""
        m = self.prop_norm(memory)
        size = np.full((len(centers), 2), PROPOSAL_SIZE)
        cell = np.log(np.concatenate([centers, size], 1)) - np.log(1.0 - np.concatenate([centers, size], 1))
        raw_h, raw_o = self.prop_box_h(m) + cell, self.prop_box_o(m) + cell
        return {"logits": self.prop_cls(m), "human": unit_box(raw_h), "object": unit_box(raw_o),
                "human_raw": raw_h, "object_raw": raw_o}

    def initial_queries(self, memory, centers: np.ndarray, proposals: dict | None = None):
        """Query content and pre-sigmoid reference boxes ``(x_h, x_o, ref_h, ref_o)``.

        With proposals, pair slot ``i * n_o + j`` couples the ``i``-th human peak with
        the ``j``-th object peak; each query starts from its token's encoder output.
        """
        B = memory.shape[0]
        zeros = np.zeros((B, 1, 1))
        if proposals is None:
            return self.query_h + zeros, self.query_o + zeros, self.anchor_h + zeros, self.anchor_o + zeros
        n_h, n_o = pair_grid(self.cfg.n_queries)
        radius = 1.5 * token_spacing(centers)
        scores = proposals["logits"].data
        pick_h = np.zeros((B, self.cfg.n_queries, len(centers)))
        pick_o = np.zeros_like(pick_h)
        slots = np.arange(self.cfg.n_queries)
        for b in range(B):
            hi = select_peaks(scores[b, :, 0], centers, n_h, radius)
            oi = select_peaks(scores[b, :, 1], centers, n_o, radius)
            pick_h[b, slots, np.repeat(hi, n_o)] = 1.0
            pick_o[b, slots, np.tile(oi, n_h)] = 1.0
        x_h = nx.matmul(pick_h, memory) + self.query_h
        x_o = nx.matmul(pick_o, memory) + self.query_o
        ref_h = nx.matmul(pick_h, proposals["human_raw"])
        ref_o = nx.matmul(pick_o, proposals["object_raw"])
        # each half of a pair slot learns the slot's layout so it can tell interacting pairs apart
        layout = pair_geometry(unit_box(ref_h), unit_box(ref_o))
        return x_h + self.ins_pair_h(layout), x_o + self.ins_pair_o(layout), ref_h, ref_o

    def instance_decode(self, memory, pos, ablate: str = "none", trace: dict | None = None, centers=None,
                        proposals: dict | None = None):
        """Run the instance decoder; returns ``(Q'_h, Q'_o, human_boxes, object_boxes, obj_logits, aux)``."""
        Q = self.cfg.n_queries
        if centers is None:
            centers = grid_centers(memory.shape[-2])
        x_h, x_o, ref_h, ref_o = self.initial_queries(memory, centers, proposals)
        aux = []
        for i, layer in enumerate(self.ins_layers):
            if aux:
                ref_h, ref_o = self._logit(aux[-1].human_boxes), self._logit(aux[-1].object_boxes)
            if self._geo_active(i, ablate):
                if aux:
                    bh, bo = aux[-1].human_boxes.data, aux[-1].object_boxes.data
                else:
                    bh, bo = unit_box(ref_h.data).data, unit_box(ref_o.data).data
                layer_trace = {} if trace is not None else None
                x_h, x_o = geometric_layer(x_h, x_o, self.pos_h, self.pos_o, bh, bo, self.geo[i], self.cfg, layer_trace)
                if trace is not None:
                    trace[f"ins.{i}"] = layer_trace
            query_pos = nx.concat([self._query_pos(self.pos_h, ref_h), self._query_pos(self.pos_o, ref_o)], axis=1)
            ref_box = unit_box(nx.concat([ref_h, ref_o], axis=1))
            x = layer(nx.concat([x_h, x_o], axis=1), query_pos, memory, pos, self._prior(ref_box, centers),
                      ref_box, centers)
            x_h, x_o = x[:, :Q, :], x[:, Q:, :]
            aux.append(AuxOutput(*self.heads(x_h, x_o, ref_h, ref_o)))
        if not self.ins_layers:
            aux.append(AuxOutput(*self.heads(x_h, x_o, ref_h, ref_o)))
        final = aux.pop()
        return x_h, x_o, final.human_boxes, final.object_boxes, final.obj_logits, aux

    def interaction_decode(self, memory, pos, Q_int, ablate: str = "none", trace: dict | None = None,
                           boxes=None, centers=None):
        """Semantic-aware interaction decoder -> interaction logits ``[B, Q, C_a]``.

        ``boxes`` is the final ``(human, object)`` box pair; its centres join the query position
        and, with ``centers``, the attention prior keeps whichever box explains a token better.
        """
        mem = self.memory_proj(memory)
        mem_pos = tile_channels(pos)
        query_pos = (self.pos_h + self.pos_o) * 0.5
        if boxes is not None:
            query_pos = query_pos + (sine_embed(boxes[0][..., :2], self.cfg.d_entity)
                                     + sine_embed(boxes[1][..., :2], self.cfg.d_entity)) * 0.5
        query_pos = tile_channels(query_pos)
        prior = None
        if boxes is not None and centers is not None and self.cfg.attn_prior > 0:
            prior = nx.maximum(self._prior(boxes[0], centers), self._prior(boxes[1], centers))
        x = Q_int
        if boxes is not None:
            x = x + self.pair_embed(pair_geometry(*boxes))
        for i, layer in enumerate(self.int_layers):
            if self._sem_active(i, ablate):
                layer_trace = {} if trace is not None else None
                x = semantic_layer(x, self.cfg.k_sem, self.sem[i], layer_trace)
                if trace is not None:
                    trace[f"int.{i}"] = layer_trace
            x = layer(x, query_pos, mem, mem_pos, prior)
        return self.int_cls(self.int_norm(x))

    def forward(self, features, pos, ablate: str = "none", trace: dict | None = None,
                centers: np.ndarray | None = None) -> ModelOutput:
        """``features``: ``[B, HW, feature_dim]`` (or unbatched); ``pos``: ``[HW, d_entity]``.

        ``centers`` holds the ``(x, y)`` location of each token; a square grid is assumed when omitted.
        """
        features = nx.as_tensor(features)
        if features.ndim == 2:
            features = nx.reshape(features, (1,) + features.shape)
        pos = nx.as_tensor(pos)
        if centers is None:
            centers = grid_centers(features.shape[-2])
        memory = self.encode_scene(features, pos)
        proposals = self.propose(memory, centers) if self.cfg.query_init == "proposal" else None
        x_h, x_o, hb, ob, logits, aux = self.instance_decode(memory, pos, ablate, trace, centers, proposals)
        q_int = init_interaction_queries(self.ins_norm(x_h), self.ins_norm(x_o))
        int_logits = self.interaction_decode(memory, pos, q_int, ablate, trace, boxes=(hb, ob), centers=centers)
        return ModelOutput(hb, ob, logits, int_logits, aux if self.cfg.aux_loss else [],
                           trace if trace is not None else {}, proposals or {})

    __call__ = forward


def estimate_flops(cfg: ModelConfig, n_tokens: int) -> int:
    """Analytic multiply-add count x2 for one forward pass over one scene.

    Counts dense matmuls only (projections, attention products, FFNs, heads,
    grouping MLPs); elementwise ops and normalisation are ignored.
    """
    d, di, Q, T = cfg.d_entity, cfg.d_interaction, cfg.n_queries, n_tokens
    h = cfg.ffn_mult

    def attn(nq, nk, dm, dkv):
        return nq * dm * dm * 2 + nk * dkv * dm * 2 + 2 * nq * nk * dm

    def ffn(n, dm):
        return 2 * n * dm * h * dm

    macs = T * cfg.feature_dim * d
    macs += cfg.encoder_layers * (attn(T, T, d, d) + ffn(T, d))
    n_ins = 2 * Q
    kg = min(cfg.k_geo, Q - 1 if cfg.exclude_self else Q) if cfg.group_mode == "intra" else min(
        cfg.k_geo, 2 * Q - 1 if cfg.exclude_self else 2 * Q)
    geo = n_ins * (3 * d * d) + n_ins * kg * (2 * d * d + 2 * d * d) + n_ins * d * d
    heads = 2 * Q * 4 * d + Q * (cfg.num_object_classes + 1) * d
    active_geo = cfg.instance_decoder_layers if cfg.geo_layers < 0 else cfg.geo_layers
    macs += cfg.instance_decoder_layers * (attn(n_ins, n_ins, d, d) + attn(n_ins, T, d, d) + ffn(n_ins, d) + heads)
    macs += (active_geo if cfg.use_geo else 0) * geo
    ks = min(cfg.k_sem, Q - 1)
    sem = Q * ks * (2 * di * di + (cfg.sem_depth - 1) * di * di) + Q * cfg.sem_depth * di * di
    active_sem = cfg.interaction_decoder_layers if cfg.sem_layers < 0 else cfg.sem_layers
    macs += T * d * di
    macs += cfg.interaction_decoder_layers * (attn(Q, Q, di, di) + attn(Q, T, di, di) + ffn(Q, di))
    macs += (active_sem if cfg.use_sem else 0) * sem
    macs += Q * di * cfg.num_interactions
    return int(2 * macs)


def config_from_dict(values: dict) -> ModelConfig:
    names = {f.name for f in fields(ModelConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    return ModelConfig(**values)


def config_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)

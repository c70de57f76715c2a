"""Synthetic HOI scenes: rule-labelled entity layouts rasterised into feature grids.

Interactions are defined by geometric predicates on a (human, object) pair
(plus the object class for ``kick``/``look``, and the set of nearby humans
for ``team``).  Scenes are built from templates that satisfy one predicate,
then every pair is re-labelled by evaluating all predicates, so each emitted
triplet is exactly what the rules say.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, GenerationError
from .geometry import Box, sine_embed_points
from .losses import PairTargets

INTERACTIONS = ("hold", "ride", "carry", "look", "kick", "team")
# nominal (w, h) per object class; cycled when there are more classes
OBJECT_SIZES = ((0.10, 0.10), (0.09, 0.13), (0.20, 0.09), (0.13, 0.15), (0.16, 0.16))
HUMAN_W = (0.13, 0.18)
HUMAN_H = (0.26, 0.34)
SCHEMA = {"format": "hoi-synth", "version": 1}
RARE_THRESHOLD = 10


@dataclass
class SynthConfig:
    grid_h: int = 16
    grid_w: int = 16
    channels: int = 32
    min_humans: int = 1
    max_humans: int = 4
    min_objects: int = 1
    max_objects: int = 4
    num_object_classes: int = 5
    num_interactions: int = 6
    rules: str = "hold,ride,carry,look,kick,team"
    noise_sigma: float = 0.05
    rare_interaction: int = -1
    rare_weight: float = 1.0
    team_radius: float = 0.22
    size_jitter: float = 0.15
    max_tries: int = 200

    def validate(self) -> "SynthConfig":
        if self.grid_h * self.grid_w < 4:
            raise ConfigError("grid must have at least 4 cells")
        if not 2 <= self.num_interactions <= len(INTERACTIONS):
            raise ConfigError(f"num_interactions must be in [2, {len(INTERACTIONS)}]")
        if self.num_object_classes < 1:
            raise ConfigError("need at least one object class")
        if self.channels < self.num_object_classes + 3:
            raise ConfigError(f"channels={self.channels} too small for {self.num_object_classes} classes")
        if not (0 <= self.min_humans <= self.max_humans and 0 <= self.min_objects <= self.max_objects):
            raise ConfigError("entity count ranges are inverted")
        for r in self.enabled_rules():
            if INTERACTIONS.index(r) >= self.num_interactions:
                raise ConfigError(f"rule {r!r} is outside the first {self.num_interactions} interactions")
        if self.rare_interaction >= self.num_interactions:
            raise ConfigError("rare_interaction out of range")
        if self.rare_weight < 0 or self.noise_sigma < 0:
            raise ConfigError("rare_weight and noise_sigma must be non-negative")
        return self

    def enabled_rules(self) -> list[str]:
        names = [r.strip() for r in self.rules.split(",") if r.strip()]
        for r in names:
            if r not in INTERACTIONS:
                raise ConfigError(f"unknown rule {r!r}; choose from {INTERACTIONS}")
        return names


@dataclass
class Scene:
    humans: list[Box]
    objects: list[tuple[Box, int]]
    triplets: list[tuple[int, int, int]]
    seed: int = 0

    def targets(self, num_interactions: int) -> PairTargets:
        """Group triplets by (human, object) pair into multi-hot targets."""
        pairs: dict[tuple[int, int], np.ndarray] = {}
        for h, o, a in self.triplets:
            pairs.setdefault((h, o), np.zeros(num_interactions))[a] = 1.0
        keys = sorted(pairs)
        every_h = np.array([b.as_array() for b in self.humans]).reshape(-1, 4)
        every_o = np.array([b.as_array() for b, _ in self.objects]).reshape(-1, 4)
        if not keys:
            return PairTargets(np.zeros((0, 4)), np.zeros((0, 4)), np.zeros(0, dtype=np.int64),
                               np.zeros((0, num_interactions)), every_h, every_o)
        return PairTargets(
            np.array([self.humans[h].as_array() for h, _ in keys]),
            np.array([self.objects[o][0].as_array() for _, o in keys]),
            np.array([self.objects[o][1] for _, o in keys], dtype=np.int64),
            np.array([pairs[k] for k in keys]),
            every_h, every_o,
        )


# -- rule predicates ----------------------------------------------------------------
def _side_gap(h: Box, o: Box) -> float:
    return abs(o.cx - h.cx) - (h.w + o.w) / 2


def rule_holds(rule: str, h: Box, o: Box, cls: int, humans: list[Box], cfg: SynthConfig) -> bool:
    dx, dy = o.cx - h.cx, o.cy - h.cy
    if rule == "hold":
        return abs(dx) <= (h.w - o.w) / 2 and abs(dy) <= (h.h - o.h) / 2
    if rule == "ride":
        gap = (o.cy - o.h / 2) - (h.cy + h.h / 2)
        return abs(dx) <= 0.35 * h.w and -0.02 <= gap <= 0.03
    if rule == "carry":
        gap = (h.cy - h.h / 2) - (o.cy + o.h / 2)
        return abs(dx) <= 0.35 * h.w and -0.02 <= gap <= 0.03
    if rule in ("look", "kick"):
        side = abs(dy) <= 0.3 * h.h and 0.01 <= _side_gap(h, o) <= 0.08
        return side and ((cls == 0) if rule == "kick" else (cls != 0))
    if rule == "team":
        near = [b for b in humans if math.hypot(b.cx - o.cx, b.cy - o.cy) <= cfg.team_radius]
        return len(near) >= 2 and math.hypot(dx, dy) <= cfg.team_radius
    raise ConfigError(f"unknown rule {rule!r}")


def label_scene(humans: list[Box], objects: list[tuple[Box, int]], cfg: SynthConfig) -> list[tuple[int, int, int]]:
    """Every (human, object, interaction) for which the interaction's predicate holds."""
    rules = cfg.enabled_rules()
    out = []
    for i, h in enumerate(humans):
        for j, (o, cls) in enumerate(objects):
            for r in rules:
                if rule_holds(r, h, o, cls, humans, cfg):
                    out.append((i, j, INTERACTIONS.index(r)))
    return sorted(out)


# -- generation ----------------------------------------------------------------------
def _object_size(rng, cls: int, jitter: float):
    w, h = OBJECT_SIZES[cls % len(OBJECT_SIZES)]
    return w * (1 + rng.uniform(-jitter, jitter)), h * (1 + rng.uniform(-jitter, jitter))


def _human_size(rng):
    return rng.uniform(*HUMAN_W), rng.uniform(*HUMAN_H)


def _inside(b) -> bool:
    cx, cy, w, h = b
    return w / 2 <= cx <= 1 - w / 2 and h / 2 <= cy <= 1 - h / 2


def _template(rule: str, rng, cfg: SynthConfig, max_humans: int = 3):
    """Candidate (humans, objects) for one interaction template, as raw tuples."""
    hw, hh = _human_size(rng)
    if rule == "kick":
        cls = 0
    elif rule == "look":
        cls = int(rng.integers(1, cfg.num_object_classes)) if cfg.num_object_classes > 1 else 0
    else:
        cls = int(rng.integers(0, cfg.num_object_classes))
    ow, oh = _object_size(rng, cls, cfg.size_jitter)
    hx, hy = rng.uniform(0.08, 0.92), rng.uniform(0.15, 0.85)
    if rule == "hold":
        ow, oh = min(ow, 0.8 * hw), min(oh, 0.5 * hh)
        ox = hx + rng.uniform(-0.9, 0.9) * (hw - ow) / 2
        oy = hy + rng.uniform(-0.9, 0.9) * (hh - oh) / 2
    elif rule == "ride":
        ox, oy = hx + rng.uniform(-0.3, 0.3) * hw, hy + hh / 2 + oh / 2 + rng.uniform(-0.01, 0.02)
    elif rule == "carry":
        ox, oy = hx + rng.uniform(-0.3, 0.3) * hw, hy - hh / 2 - oh / 2 - rng.uniform(-0.01, 0.02)
    elif rule in ("look", "kick"):
        side = 1 if rng.random() < 0.5 else -1
        ox = hx + side * ((hw + ow) / 2 + rng.uniform(0.02, 0.07))
        oy = hy + rng.uniform(-0.25, 0.25) * hh
    elif rule == "team":
        ox, oy = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)
        n = 3 if rng.random() >= 0.7 and max_humans >= 3 else 2
        start = rng.uniform(0, 2 * math.pi)
        humans = []
        for k in range(n):
            ang = start + 2 * math.pi * k / n
            r = rng.uniform(0.12, 0.18)
            w, h = _human_size(rng)
            humans.append((ox + r * math.cos(ang), oy + r * math.sin(ang), w, h))
        return humans, [((ox, oy, ow, oh), cls)]
    else:
        raise ConfigError(f"unknown rule {rule!r}")
    return [(hx, hy, hw, hh)], [((ox, oy, ow, oh), cls)]


def _expanded_overlap(a, b, margin: float) -> bool:
    return (abs(a[0] - b[0]) < (a[2] + b[2]) / 2 + margin) and (abs(a[1] - b[1]) < (a[3] + b[3]) / 2 + margin)


def _fits(new: list, placed: list, margin: float = 0.04) -> bool:
    if not all(_inside(b) for b in new):
        return False
    return not any(_expanded_overlap(a, b, margin) for a in new for b in placed)


def _round_box(b) -> Box:
    return Box(*(round(float(v), 4) for v in b))


def generate_scene(seed: int, cfg: SynthConfig) -> Scene:
    """Deterministic scene for ``(seed, cfg)``."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    n_h = int(rng.integers(cfg.min_humans, cfg.max_humans + 1))
    n_o = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    rules = cfg.enabled_rules()
    weights = np.array([cfg.rare_weight if INTERACTIONS.index(r) == cfg.rare_interaction else 1.0 for r in rules])
    humans, objects, placed = [], [], []
    budget_h, budget_o = n_h, n_o
    while budget_o >= 1 and budget_h >= 1 and weights.sum() > 0:
        usable = np.array([w if (2 if r == "team" else 1) <= budget_h else 0.0 for r, w in zip(rules, weights)])
        if usable.sum() == 0:
            break
        rule = rules[int(rng.choice(len(rules), p=usable / usable.sum()))]
        for _ in range(cfg.max_tries):
            hs, os_ = _template(rule, rng, cfg, budget_h)
            boxes = hs + [b for b, _ in os_]
            if _fits(boxes, placed):
                break
        else:
            break
        humans += hs
        objects += os_
        placed += boxes
        budget_h -= len(hs)
        budget_o -= len(os_)
    for kind, count in (("human", n_h - len(humans)), ("object", n_o - len(objects))):
        for _ in range(count):
            for _ in range(cfg.max_tries):
                if kind == "human":
                    w, h = _human_size(rng)
                    cand, cls = (rng.uniform(0.05, 0.95), rng.uniform(0.1, 0.9), w, h), None
                else:
                    cls = int(rng.integers(0, cfg.num_object_classes))
                    w, h = _object_size(rng, cls, cfg.size_jitter)
                    cand = (rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), w, h)
                if _fits([cand], placed, margin=0.05):
                    break
            else:
                raise GenerationError(f"seed {seed}: cannot place {n_h} humans and {n_o} objects in the frame")
            placed.append(cand)
            if kind == "human":
                humans.append(cand)
            else:
                objects.append((cand, cls))
    hb = [_round_box(b) for b in humans]
    ob = [(_round_box(b), int(c)) for b, c in objects]
    return Scene(hb, ob, label_scene(hb, ob, cfg), seed)


# -- rasterisation -----------------------------------------------------------------------
def cell_centers(cfg: SynthConfig) -> np.ndarray:
    ys, xs = np.meshgrid((np.arange(cfg.grid_h) + 0.5) / cfg.grid_h, (np.arange(cfg.grid_w) + 0.5) / cfg.grid_w,
                         indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def sine_position_embedding(grid_h: int, grid_w: int, d: int, temperature: float = 10000.0) -> np.ndarray:
    """2-D sinusoidal embedding ``[H*W, d]`` of the cell centres: first half encodes y, second half x."""
    ys, xs = np.meshgrid((np.arange(grid_h) + 0.5) / grid_h, (np.arange(grid_w) + 0.5) / grid_w, indexing="ij")
    return sine_embed_points(np.stack([xs.ravel(), ys.ravel()], axis=1), d, temperature)


def entity_signature(kind: int, w: float, h: float, cfg: SynthConfig) -> np.ndarray:
    """Channel code: one-hot entity type (0 = human, 1 + c = object class c), then 4w and 4h."""
    sig = np.zeros(cfg.channels)
    sig[kind] = 1.0
    sig[cfg.num_object_classes + 1] = 4.0 * w
    sig[cfg.num_object_classes + 2] = 4.0 * h
    return sig


def rasterize(scene: Scene, cfg: SynthConfig, pos_dim: int | None = None):
    """Feature grid ``[H*W, channels]`` and positional embedding ``[H*W, pos_dim]``.

    Each entity contributes an isotropic Gaussian splat at its box centre
    (width proportional to sqrt(w*h)) times its channel signature; i.i.d.
    noise with std ``noise_sigma`` is added from a stream seeded by the scene.
    """
    centers = cell_centers(cfg)
    feats = np.zeros((len(centers), cfg.channels))
    entities = [(0, b) for b in scene.humans] + [(1 + c, b) for b, c in scene.objects]
    for kind, b in entities:
        s = 0.5 * math.sqrt(b.w * b.h)
        d2 = (centers[:, 0] - b.cx) ** 2 + (centers[:, 1] - b.cy) ** 2
        feats += np.exp(-d2 / (2 * s * s))[:, None] * entity_signature(kind, b.w, b.h, cfg)[None]
    if cfg.noise_sigma > 0:
        feats += np.random.default_rng([scene.seed, 7]).normal(0.0, cfg.noise_sigma, size=feats.shape)
    pos = sine_position_embedding(cfg.grid_h, cfg.grid_w, pos_dim or cfg.channels)
    return feats, pos


# -- dataset files --------------------------------------------------------------------------
def _fmt_box(b: Box) -> str:
    return "[" + ",".join(f"{v:.4f}" for v in (b.cx, b.cy, b.w, b.h)) + "]"


def scene_to_line(scene: Scene) -> str:
    humans = ",".join(_fmt_box(b) for b in scene.humans)
    objects = ",".join(f'{{"box":{_fmt_box(b)},"class":{c}}}' for b, c in scene.objects)
    triplets = ",".join(f"[{h},{o},{a}]" for h, o, a in scene.triplets)
    return f'{{"seed":{scene.seed},"humans":[{humans}],"objects":[{objects}],"triplets":[{triplets}]}}'


def scene_from_record(rec: dict) -> Scene:
    try:
        humans = [Box(*b) for b in rec["humans"]]
        objects = [(Box(*o["box"]), int(o["class"])) for o in rec["objects"]]
        triplets = [tuple(int(v) for v in t) for t in rec["triplets"]]
        seed = int(rec["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed scene record: {exc}") from exc
    for h, o, _ in triplets:
        if not (0 <= h < len(humans) and 0 <= o < len(objects)):
            raise DataError(f"scene {seed}: triplet index out of range")
    return Scene(humans, objects, triplets, seed)


def write_dataset(path, scenes: list[Scene]) -> None:
    lines = [json.dumps(SCHEMA, sort_keys=True)] + [scene_to_line(s) for s in scenes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_dataset(path) -> list[Scene]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file {path} not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != SCHEMA["format"] or header.get("version") != SCHEMA["version"]:
        raise DataError(f"{path}: unsupported schema header {header}")
    return [scene_from_record(json.loads(line)) for line in lines[1:] if line.strip()]


def interaction_counts(scenes: list[Scene], num_interactions: int) -> list[int]:
    counts = [0] * num_interactions
    for s in scenes:
        for _, _, a in s.triplets:
            counts[a] += 1
    return counts


def rare_classes(counts: list[int], threshold: int = RARE_THRESHOLD) -> list[int]:
    """Interaction classes with fewer than ``threshold`` training instances."""
    return [a for a, c in enumerate(counts) if c < threshold]


@dataclass
class SplitFiles:
    train: Path
    val: Path
    meta: Path
    train_counts: list = field(default_factory=list)
    rare: list = field(default_factory=list)


def make_splits(cfg: SynthConfig, n_train: int, n_val: int, base_seed: int, out_dir) -> SplitFiles:
    """Write ``train.jsonl``/``val.jsonl`` from disjoint seed ranges plus ``meta.json`` with train counts."""
    if n_train < 1 or n_val < 1:
        raise ConfigError("n_train and n_val must be >= 1")
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = [generate_scene(base_seed + i, cfg) for i in range(n_train)]
    val = [generate_scene(base_seed + n_train + i, cfg) for i in range(n_val)]
    counts = interaction_counts(train, cfg.num_interactions)
    rare = rare_classes(counts)
    files = SplitFiles(out / "train.jsonl", out / "val.jsonl", out / "meta.json", counts, rare)
    write_dataset(files.train, train)
    write_dataset(files.val, val)
    meta = {
        "schema": SCHEMA,
        "train_seeds": [base_seed, base_seed + n_train],
        "val_seeds": [base_seed + n_train, base_seed + n_train + n_val],
        "train_counts": counts,
        "rare": rare,
        "interactions": list(INTERACTIONS[: cfg.num_interactions]),
        "synth": asdict(cfg),
    }
    files.meta.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8", newline="\n")
    return files


def synth_config_from_dict(values: dict) -> SynthConfig:
    names = {f.name for f in fields(SynthConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    return SynthConfig(**values)

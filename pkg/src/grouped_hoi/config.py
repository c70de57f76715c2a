"""Flat ``key = value`` run configuration routed into synth, model and training dataclasses."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .synth import SynthConfig

SHARED_KEYS = ("num_object_classes", "num_interactions")


@dataclass
class TrainConfig:
    n_train: int = 500
    n_val: int = 100
    data_seed: int = 0
    seed: int = 0
    epochs: int = 32
    max_steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    lr_drop_every: int = 24  # epochs between x lr_gamma decays
    lr_gamma: float = 0.1
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 0.1
    eval_every: int = 1
    nms_iou: float = 0.7
    top_k: int = 100
    data_dir: str = "data"
    out_dir: str = "runs/default"

    def validate(self) -> "TrainConfig":
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("n_train and n_val must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.max_steps < 0:
            raise ConfigError("batch_size must be >= 1; epochs and max_steps >= 0")
        if self.lr <= 0 or self.lr_drop_every < 1 or not 0 < self.lr_gamma <= 1:
            raise ConfigError("invalid learning-rate schedule")
        if self.top_k < 1 or not 0 <= self.nms_iou <= 1:
            raise ConfigError("invalid NMS settings")
        return self


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    text: str = ""  # the parsed file, verbatim

    def validate(self) -> "RunConfig":
        self.synth.validate()
        self.model.validate()
        self.train.validate()
        if self.model.feature_dim != self.synth.channels:
            raise ConfigError("model feature width must equal synth channels")
        for k in SHARED_KEYS:
            if getattr(self.model, k) != getattr(self.synth, k):
                raise ConfigError(f"{k} differs between synth and model")
        return self

    def resolved(self) -> dict:
        out = {}
        for section in (self.synth, self.model, self.train):
            for f in fields(section):
                out[f.name] = getattr(section, f.name)
        return out

    def canonical(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(self.resolved().items()))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def with_overrides(self, **values) -> "RunConfig":
        if "seed" in values and "init_seed" not in values:
            values["init_seed"] = values["seed"]
        return build_config({**self.resolved(), **values}, self.text)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return raw


def _sections():
    return {"synth": SynthConfig, "model": ModelConfig, "train": TrainConfig}


def build_config(values: dict, text: str = "") -> RunConfig:
    """Route flat values into sections; ``seed`` also sets the model init seed; unknown keys raise."""
    owners: dict[str, list[str]] = {}
    for sec, cls in _sections().items():
        for f in fields(cls):
            owners.setdefault(f.name, []).append(sec)
    unknown = sorted(set(values) - set(owners))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    parts = {sec: {} for sec in _sections()}
    defaults = {sec: cls() for sec, cls in _sections().items()}
    for key, raw in values.items():
        for sec in owners[key]:
            default = getattr(defaults[sec], key)
            parts[sec][key] = _coerce(raw, default, key) if isinstance(raw, str) else raw
    if "seed" in values and "init_seed" not in values:
        parts["model"]["init_seed"] = parts["train"]["seed"]
    synth = SynthConfig(**parts["synth"])
    parts["model"].setdefault("feature_dim", synth.channels)
    cfg = RunConfig(synth, ModelConfig(**parts["model"]), TrainConfig(**parts["train"]), text)
    return cfg.validate()


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = raw
    return build_config(values, text)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    return parse_config_text(p.read_text(encoding="utf-8"))

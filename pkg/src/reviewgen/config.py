"""Run configuration with defaults and a ``key=value`` config-file reader."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    # model / optimization
    hidden: int = 512
    emb: int = 512
    layers: int = 1
    learning_rate: float = 0.0002
    clip_min: float = -5.0
    clip_max: float = 5.0
    batch_size: int = 16
    epochs: int = 30
    patience: int = 5
    lam: float = 0.8
    seed: int = 0
    init_scale: float = 0.08
    pad_rating_prob: float = 0.1
    variant: str = "full"
    # decoding
    beam: int = 5
    max_decode_len: int = 15
    # data limits
    max_reviews: int = 20
    max_review_len: int = 20
    max_snippet_len: int = 20
    max_snippets: int = 5
    min_reviews: int = 20
    min_freq: int = 5
    max_vocab: int = 30000
    # auxiliary classifier
    cls_hidden: int = 256
    cls_emb: int = 256
    cls_epochs: int = 5
    cls_learning_rate: float = 0.001
    freeze_classifier: bool = True

    def __post_init__(self):
        if self.layers != 1:
            raise ValueError("only single-layer GRUs are implemented")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.clip_min >= self.clip_max:
            raise ValueError("clip_min must be below clip_max")

    @property
    def clip_range(self) -> tuple:
        return (self.clip_min, self.clip_max)

    def replace(self, **overrides) -> "TrainConfig":
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(TrainConfig)}
    if name not in types:
        raise ValueError(f"unknown config key {name!r}")
    t = types[name]
    if t in ("bool", bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if t in ("int", int):
        return int(raw)
    if t in ("float", float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, **overrides) -> TrainConfig:
    values = parse_config_text(Path(path).read_text("utf-8")) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)

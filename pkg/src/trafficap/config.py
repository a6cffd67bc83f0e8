"""Run configuration: model dims, loss weights, and training knobs.

One flat key-value JSON file configures a run; every key below is a field
of one of the three dataclasses. Unknown keys are rejected outright so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig

APP_TYPE_LABELS = ("music", "video", "shopping", "messaging", "social media")


@dataclass
class EncoderConfig:
    feature_dim: int = 123
    hidden_dim: int = 512
    pattern_dim: int = 256
    type_embed_dim: int = 64
    app_type_count: int = 5
    prototypes_per_type: int = 5
    max_flows: int = 50
    encoder_layers: int = 2
    attention_heads: int = 4
    dropout: float = 0.1
    use_dfm: bool = True
    use_fppl: bool = True

    def validate(self) -> None:
        dims = (
            self.feature_dim,
            self.hidden_dim,
            self.pattern_dim,
            self.type_embed_dim,
            self.app_type_count,
            self.prototypes_per_type,
            self.max_flows,
            self.encoder_layers,
            self.attention_heads,
        )
        if any(d < 1 for d in dims):
            raise InvalidConfig("all model dimensions must be >= 1")
        if self.hidden_dim % self.attention_heads:
            raise InvalidConfig("hidden_dim must be divisible by attention_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must be in [0, 1)")


@dataclass
class LossWeights:
    lambda_app: float = 1.0
    lambda_cont: float = 1.0
    lambda_cap: float = 1.0
    lambda_sent: float = 1.0
    tau: float = 0.1

    def validate(self) -> None:
        weights = (self.lambda_app, self.lambda_cont, self.lambda_cap, self.lambda_sent)
        if any(w < 0 for w in weights):
            raise InvalidConfig("loss weights must be non-negative")
        if self.tau <= 0:
            raise InvalidConfig("tau must be positive")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-4
    clip_norm: float = 5.0
    seed: int = 0
    val_interval: int = 1
    patience: int = 0
    min_token_freq: int = 2
    max_caption_len: int = 30

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.val_interval < 1:
            raise InvalidConfig("epochs, batch_size, val_interval must be >= 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise InvalidConfig("learning_rate and clip_norm must be positive")
        if self.patience < 0 or self.min_token_freq < 1 or self.max_caption_len < 1:
            raise InvalidConfig("patience >= 0, min_token_freq/max_caption_len >= 1")


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    segment_secs: float = 15.0
    embedder: str = "hashed"

    def validate(self) -> None:
        self.encoder.validate()
        self.loss.validate()
        self.train.validate()
        if self.segment_secs <= 0:
            raise InvalidConfig("segment_secs must be positive")

    def to_flat_dict(self) -> dict:
        flat: dict = {"segment_secs": self.segment_secs, "embedder": self.embedder}
        for section in (self.encoder, self.loss, self.train):
            flat.update(dataclasses.asdict(section))
        return flat

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "RunConfig":
        config = cls()
        sections = (config.encoder, config.loss, config.train)
        known = {"segment_secs", "embedder"}
        field_owner: dict[str, object] = {}
        for section in sections:
            for f in dataclasses.fields(section):
                field_owner[f.name] = section
                known.add(f.name)
        unknown = set(flat) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        for key, value in flat.items():
            if key == "segment_secs":
                config.segment_secs = float(value)
            elif key == "embedder":
                config.embedder = str(value)
            else:
                owner = field_owner[key]
                current = getattr(owner, key)
                setattr(owner, key, type(current)(value))
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        try:
            flat = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(flat, dict):
            raise InvalidConfig(f"{path}: top level must be a JSON object")
        if overrides:
            flat.update(overrides)
        return cls.from_flat_dict(flat)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_flat_dict(), indent=2) + "\n", encoding="utf-8"
        )

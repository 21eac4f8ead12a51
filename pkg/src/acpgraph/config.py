"""Model and training hyperparameters.

Config files are flat JSON objects whose keys are the field names below;
missing keys take the defaults, unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields


@dataclass
class ModelConfig:
    model_dim: int = 64
    heads: int = 4
    relation_layers: int = 2
    vanilla_layers: int = 1
    ffn_dim: int = 128
    gru_hidden: int = 32
    relation_embed_dim: int = 32
    classifier_hidden: int = 64
    max_len: int = 4
    max_nodes: int = 64
    scale_scores: bool = True
    graph_type: str = "acp"
    max_neighbors: int = 100
    expand_hops: int = 1
    # training
    seed: int = 0
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    epochs: int = 50
    batch_size: int = 8
    patience: int = 10
    target_dev_accuracy: float | None = None

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

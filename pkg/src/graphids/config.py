"""Training configuration: flat YAML files keyed by hyperparameter name."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import yaml

VARIANTS = ("graphids", "t_mae", "simple_ae")


@dataclass(frozen=True)
class TrainConfig:
    # GNN
    edim_out: int = 64
    nhops: int = 1
    fanout: int = 32_768
    agg_type: str = "mean"
    gnn_dropout: float = 0.5
    incidence: str = "both"
    edge_features_in_embedding: bool = False
    # Transformer
    num_layers: int = 1
    embed_dim: int = 32
    num_heads: int = 0                 # 0 = embed_dim // 16
    ff_mult: int = 4
    window_size: int = 512
    ae_batch_size: int = 64            # windows per autoencoder batch
    mask_ratio: float = 0.15
    mask_mode: str = "masked_to_all"
    attention_scope: str = "batch"
    pos_encoding: str = "none"
    ae_dropout: float = 0.0
    # training
    learning_rate: float = 1e-4
    gnn_weight_decay: float = 0.6
    ae_weight_decay: float = 0.04
    gnn_batch_size: int = 16_384
    max_epochs: int = 100
    patience: int = 20
    grad_clip: float = 0.0             # 0 = off
    seed: int = 0
    # data
    timestamps: bool = False
    # ablations
    variant: str = "graphids"
    simple_ae_hidden: int = 0          # 0 = edim_out
    simple_ae_bottleneck: int = -1     # -1 = edim_out // 2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.agg_type != "mean":
            raise ValueError("only agg_type='mean' is supported")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0 <= self.mask_ratio < 1:
            raise ValueError("mask_ratio must lie in [0, 1)")
        for name in ("gnn_dropout", "ae_dropout"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        for name in ("edim_out", "nhops", "fanout", "num_layers", "embed_dim", "window_size",
                     "ae_batch_size", "gnn_batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.learning_rate <= 0 or self.gnn_weight_decay < 0 or self.ae_weight_decay < 0:
            raise ValueError("learning rate must be positive and weight decays non-negative")
        if self.num_heads and self.embed_dim % self.num_heads:
            raise ValueError("num_heads must divide embed_dim")

    @property
    def ae_sequence(self) -> int:
        return self.window_size * self.ae_batch_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def override(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def load_config(path_or_name) -> TrainConfig:
    """Load a YAML config from a path, or a shipped preset by name (e.g. ``nf-unsw-nb15-v3``)."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        try:
            text = resources.files("graphids.configs").joinpath(f"{path_or_name}.yaml").read_text()
        except FileNotFoundError:
            raise FileNotFoundError(f"no config file or preset named {path_or_name!r}") from None
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path_or_name}: config must be a flat mapping")
    return TrainConfig.from_dict(data)


def presets() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("graphids.configs").iterdir()
                  if p.name.endswith(".yaml"))

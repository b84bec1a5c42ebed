"""Flat pipeline configuration; every field mirrors a CLI flag one-to-one."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .ann import AnnTrainConfig, CnnConfig
from .checkpoint import dump_record, parse_record
from .snn import LifConfig
from .training import TrainConfig

SEED_ENV = "SPIKETEXT_SEED"
NORMALIZATIONS = ("none", "model", "data")


@dataclass(frozen=True)
class PipelineConfig:
    data: str = ""
    embeddings: str = ""
    out: str = "run"
    lang: str = "en"
    test_frac: float = 0.1
    val_frac: float = 0.1
    seed: int = 0
    min_freq: int = 1
    max_len: int = 0  # 0 selects the 95th-percentile rule
    dim: int = 300
    random_embeddings: bool = False
    filter_widths: tuple = (3, 4, 5)
    feature_maps: int = 100
    neurons_per_class: int = 10
    dropout: float = 0.5
    ann_lr: float = 1e-4
    ann_batch: int = 32
    ann_epochs: int = 10
    snn_lr: float = 5e-5
    snn_batch: int = 50
    snn_epochs: int = 5
    steps: int = 50
    threshold: float = 1.0
    beta: float = 1.0
    slope: float = 25.0
    surrogate_centering: str = "threshold"
    normalize: str = "none"
    trials: int = 5
    skip_finetune: bool = False

    def __post_init__(self):
        if isinstance(self.filter_widths, str):
            object.__setattr__(self, "filter_widths",
                               tuple(int(w) for w in self.filter_widths.split(",")))
        elif isinstance(self.filter_widths, int):
            object.__setattr__(self, "filter_widths", (self.filter_widths,))
        self.validate()

    def validate(self):
        if self.lang not in ("en", "zh"):
            raise ValueError(f"lang must be en or zh, got {self.lang!r}")
        if not 0 < self.test_frac < 1 or not 0 <= self.val_frac < 1:
            raise ValueError("test_frac must lie in (0, 1) and val_frac in [0, 1)")
        if self.normalize not in NORMALIZATIONS:
            raise ValueError(f"normalize must be one of {NORMALIZATIONS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.ann_lr < 0 or self.snn_lr < 0:
            raise ValueError("learning rates must be non-negative")
        # constructing the component configs runs their own checks
        self.cnn_config(2)
        self.lif_config()
        self.snn_train_config()

    def cnn_config(self, num_classes: int) -> CnnConfig:
        return CnnConfig.tailored_textcnn(
            num_classes=num_classes, embed_dim=self.dim, filter_widths=self.filter_widths,
            feature_maps=self.feature_maps, neurons_per_class=self.neurons_per_class,
            dropout=self.dropout)

    def lif_config(self) -> LifConfig:
        return LifConfig(self.beta, self.threshold, self.steps, self.slope)

    def ann_train_config(self) -> AnnTrainConfig:
        return AnnTrainConfig(self.ann_lr, self.ann_batch, self.ann_epochs, self.seed)

    def snn_train_config(self) -> TrainConfig:
        return TrainConfig(self.snn_lr, self.snn_batch, self.snn_epochs, self.seed, self.dropout,
                           centering=self.surrogate_centering)

    def to_record(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dump(self) -> str:
        return dump_record(self.to_record())

    def override(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def field_names() -> list[str]:
    return [f.name for f in fields(PipelineConfig)]


def coerce(name: str, value):
    default = PipelineConfig.__dataclass_fields__[name].default
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, tuple):
        return value
    return type(default)(value)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """File values, then the seed environment variable, then explicit overrides."""
    values = {}
    if path:
        rec = parse_record(Path(path).read_text(encoding="utf-8"))
        unknown = set(rec) - set(field_names())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: coerce(k, v) for k, v in rec.items()})
    if "seed" not in values and os.environ.get(SEED_ENV):
        values["seed"] = int(os.environ[SEED_ENV])
    values.update({k: coerce(k, v) for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig(**values)

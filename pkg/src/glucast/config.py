"""Run configuration: one JSON document with data/model/train/benchmark
sections.  Every default is overridable; unknown keys anywhere are an
error so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .benchmark import MODEL_ORDER, ModelSettings
from .model import LossWeights
from .training import TrainConfig


@dataclass
class DataConfig:
    kind: str = "synthetic"            # "synthetic" | "csv"
    paths: list[str] = field(default_factory=list)
    timestamp_column: str = "timestamp"
    glucose_column: str = "glucose"
    series_column: str = "series_id"
    extra_channels: list[str] = field(default_factory=list)
    step_minutes: int = 5
    n_samples: int = 1440
    noise_scale: float = 0.5
    level: float = 150.0               # synthetic -> mg/dL calibration offset
    scale: float = 40.0                # synthetic -> mg/dL calibration gain
    calibrate: bool = True             # calibrate synthetic data for training/benchmarks
    data_seed: int | None = None       # defaults to the training seed
    T: int = 24
    stride: int = 1
    min_observed_frac: float = 0.5
    split_frac: float = 0.8

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ValueError(f"data.kind must be 'synthetic' or 'csv', got {self.kind!r}")
        if self.kind == "csv" and not self.paths:
            raise ValueError("data.kind 'csv' requires data.paths")


@dataclass
class ModelConfig:
    kind: str = "gru"                  # cell kind of the trainable model
    hidden_size: int = 64
    latent_size: int = 8
    ar_p: int = 6
    ar_d: int = 1

    def __post_init__(self):
        if self.kind not in ("gru", "lstm"):
            raise ValueError(f"model.kind must be 'gru' or 'lstm', got {self.kind!r}")

    def settings(self) -> ModelSettings:
        return ModelSettings(self.hidden_size, self.latent_size, self.ar_p, self.ar_d)


@dataclass
class TrainSection:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    clip_norm: float = 5.0
    teacher_force: float = 0.5
    val_fraction: float = 0.1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, beta1=self.beta1, beta2=self.beta2,
            epsilon=self.epsilon, seed=self.seed,
            weights=LossWeights(self.alpha, self.beta, self.gamma),
            clip_norm=self.clip_norm, teacher_force=self.teacher_force,
            val_fraction=self.val_fraction)


@dataclass
class BenchmarkSection:
    models: list[str] = field(default_factory=lambda: list(MODEL_ORDER))
    horizons: list[int] = field(default_factory=lambda: [6, 12])
    clarke_horizon: int | None = None  # defaults to 12 when present, else max


@dataclass
class Config:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)

    def echo(self) -> dict:
        """JSON-friendly copy of the effective configuration."""
        return json.loads(json.dumps(asdict(self)))


def _build_section(cls, payload: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown keys in config section {section!r}: {sorted(unknown)}; "
                         f"known keys: {sorted(known)}")
    return cls(**payload)


def config_from_dict(payload: dict) -> Config:
    sections = {"data": DataConfig, "model": ModelConfig,
                "train": TrainSection, "benchmark": BenchmarkSection}
    unknown = set(payload) - set(sections)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}; "
                         f"known sections: {sorted(sections)}")
    kwargs = {}
    for name, cls in sections.items():
        part = payload.get(name, {})
        if not isinstance(part, dict):
            raise ValueError(f"config section {name!r} must be an object")
        kwargs[name] = _build_section(cls, part, name)
    return Config(**kwargs)


def load_config(path: str | None) -> Config:
    """Parse a config file; None gives all defaults."""
    if path is None:
        return Config()
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config root must be a JSON object")
    return config_from_dict(payload)

"""Run configuration, method presets and dataset path resolution."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .data import SPLIT_FILES
from .errors import ConfigError
from .losses import LossConfig

DATA_DIR_ENV = "DEFRAG_DATA_DIR"


@dataclass(frozen=True)
class MethodPreset:
    activation: str
    aux: str
    retract: bool


# one row per compared method; aux methods use a linear feature layer
METHODS = {
    "sparse_relu": MethodPreset("relu", "none", False),
    "linear": MethodPreset("linear", "none", False),
    "softplus": MethodPreset("softplus", "none", False),
    "center": MethodPreset("linear", "center", False),
    "contrastive_center": MethodPreset("linear", "contrastive_center", False),
    "silhouette": MethodPreset("linear", "silhouette", False),
    "defrag": MethodPreset("linear", "silhouette", True),
}


@dataclass
class RunConfig:
    dataset: str = "mnist"
    data_dir: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    method: str = "linear"
    d_feat: int = 8
    lambda_aux: float = 0.01
    delta: float = 1e-6
    alpha: float = 0.5
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    train_n: int = 0
    test_n: int = 0
    checkpoint: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown {self.method!r}; choose from {sorted(METHODS)}")
        for name in ("d_feat", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)}")
        for name in ("epochs", "train_n", "test_n"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative, got {getattr(self, name)}")
        if not self.lr >= 0:
            raise ConfigError(f"lr: must be non-negative, got {self.lr}")
        try:
            self.loss_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def preset(self) -> MethodPreset:
        return METHODS[self.method]

    def loss_config(self) -> LossConfig:
        return LossConfig(self.preset.aux, self.lambda_aux, self.delta, self.alpha)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{k: coerce(known[k], v) for k, v in values.items()})

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            values = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config: file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise ConfigError("config: top level must be a JSON object")
        return cls.from_dict(values)

    def resolve_paths(self, split: str) -> tuple[Path, Path]:
        """Image and label paths of ``split``; explicit fields win over the data directory."""
        img_key, lbl_key = f"{split}_images", f"{split}_labels"
        explicit = getattr(self, img_key), getattr(self, lbl_key)
        if all(explicit):
            paths = tuple(Path(p) for p in explicit)
        else:
            root = self.data_dir or os.environ.get(DATA_DIR_ENV, "")
            if not root:
                missing = img_key if not explicit[0] else lbl_key
                raise ConfigError(f"{missing}: no path given and neither data_dir nor ${DATA_DIR_ENV} is set")
            base = Path(root) / self.dataset
            stems = SPLIT_FILES[split]
            paths = tuple(
                Path(given) if given else _existing(base / stem) for given, stem in zip(explicit, stems)
            )
        for key, path in zip((img_key, lbl_key), paths):
            if not path.exists():
                raise ConfigError(f"{key}: file {path} does not exist")
        return paths


def _existing(path: Path) -> Path:
    gz = path.with_name(path.name + ".gz")
    return gz if not path.exists() and gz.exists() else path


def coerce(f: dataclasses.Field, value):
    kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str}[f.type]
    if isinstance(value, str) and kind is not str:
        try:
            return kind(value)
        except ValueError:
            raise ConfigError(f"{f.name}: cannot parse {value!r} as {kind.__name__}") from None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{f.name}: expected {kind.__name__}, got {value!r}")
    return value

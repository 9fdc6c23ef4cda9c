"""The two-conv, three-FC network and its parameter container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError
from .grassmann import retract
from .tensor import Tensor, flatten, matmul, no_grad

NUM_CLASSES = 10
FEATURE_WEIGHT = "feature.weight"


def parameter_shapes(d_feat: int) -> dict[str, tuple[int, ...]]:
    return {
        "conv1.weight": (32, 1, 5, 5),
        "conv1.bias": (32,),
        "conv2.weight": (256, 32, 5, 5),
        "conv2.bias": (256,),
        "fc1.weight": (4096, 256),
        "fc1.bias": (256,),
        FEATURE_WEIGHT: (256, d_feat),
        "head.weight": (d_feat, NUM_CLASSES),
        "head.bias": (NUM_CLASSES,),
    }


@dataclass
class ModelState:
    params: dict[str, Tensor]
    feature_activation: str = "linear"
    d_feat: int = 8
    method: str = "linear"
    retract: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = parameter_shapes(self.d_feat)
        if list(self.params) != list(expected):
            raise DimensionError(f"parameters must be exactly {list(expected)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise DimensionError(f"{name} has shape {self.params[name].shape}, expected {shape}")
        if self.feature_activation not in F.ACTIVATIONS:
            raise ConfigError(f"unknown feature activation {self.feature_activation!r}")

    @property
    def projection(self) -> Tensor:
        return self.params[FEATURE_WEIGHT]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def gradients(self) -> dict[str, np.ndarray]:
        return {name: p.grad for name, p in self.params.items() if p.grad is not None}

    def forward(self, images, trace: list | None = None) -> tuple[Tensor, Tensor]:
        """Return ``(features, logits)`` for an ``N×1×28×28`` batch.

        When ``trace`` is given, the inputs of every relu and pooling stage are
        appended to it as ``(kind, array)`` pairs.
        """
        p = self.params
        x = images if isinstance(images, Tensor) else Tensor(images)

        def record(kind, t):
            if trace is not None:
                trace.append((kind, t.data))
            return t

        for conv in ("conv1", "conv2"):
            x = F.relu(record("relu", F.conv2d(x, p[f"{conv}.weight"], p[f"{conv}.bias"])))
            x = F.maxpool2(record("pool", x))
        x = F.relu(record("relu", matmul(flatten(x), p["fc1.weight"]) + p["fc1.bias"]))
        pre = record(self.feature_activation, matmul(x, p[FEATURE_WEIGHT]))
        features = F.ACTIVATIONS[self.feature_activation](pre)
        logits = matmul(features, p["head.weight"]) + p["head.bias"]
        return features, logits

    def predict(self, images: np.ndarray, batch_size: int = 500) -> tuple[np.ndarray, np.ndarray]:
        """Graph-free forward over ``images`` in fixed-size chunks; returns ``(features, logits)``."""
        feats, logits = [], []
        with no_grad():
            for start in range(0, len(images), batch_size):
                f, lg = self.forward(images[start : start + batch_size])
                feats.append(f.data)
                logits.append(lg.data)
        if not feats:
            return np.zeros((0, self.d_feat)), np.zeros((0, NUM_CLASSES))
        return np.concatenate(feats), np.concatenate(logits)


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_model(cfg) -> ModelState:
    """Seeded initialisation: Kaiming-uniform (fan-in) weights, zero biases.

    When the method retracts, the projection starts on the manifold.
    """
    cfg.validate()
    preset = cfg.preset
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in parameter_shapes(cfg.d_feat).items():
        if name.endswith(".bias"):
            value = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            value = kaiming_uniform(rng, shape, fan_in)
        params[name] = Tensor(value, requires_grad=True, name=name)
    if preset.retract:
        params[FEATURE_WEIGHT].data = retract(params[FEATURE_WEIGHT].data)
    return ModelState(params, preset.activation, cfg.d_feat, cfg.method, preset.retract)

"""Auxiliary clustering losses, activation regularisers and the class-centre bank.

All losses take a feature batch ``x`` (``m×d`` :class:`Tensor`) and return a
scalar :class:`Tensor`. Centres are read from a :class:`CenterBank` and are
constants for differentiation; they move only through :func:`update_centers`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UsageError, ValidationError
from .tensor import Tensor, as_tensor, masked_row_min, pick, reshape, square, tabs, tsum

LOSS_KINDS = ("none", "l1", "l2", "center", "contrastive_center", "silhouette")
CENTER_KINDS = ("center", "contrastive_center", "silhouette")


@dataclass
class LossConfig:
    kind: str = "none"
    lambda_aux: float = 0.01
    delta: float = 1e-6
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"unknown auxiliary loss {self.kind!r}; expected one of {LOSS_KINDS}")
        if not self.lambda_aux >= 0:
            raise ValidationError(f"lambda_aux must be >= 0, got {self.lambda_aux}")
        if not self.delta > 0:
            raise ValidationError(f"delta must be > 0, got {self.delta}")
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def uses_centers(self) -> bool:
        return self.kind in CENTER_KINDS


@dataclass
class CenterBank:
    """Per-class feature centroids with a running-average update."""

    num_classes: int
    dim: int
    alpha: float = 0.5
    centers: np.ndarray = field(default=None)
    initialized: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValidationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.centers is None:
            self.centers = np.zeros((self.num_classes, self.dim))
        else:
            self.centers = np.array(self.centers, dtype=np.float64)
        if self.initialized is None:
            self.initialized = np.zeros(self.num_classes, dtype=bool)
        else:
            self.initialized = np.array(self.initialized, dtype=bool)
        if self.centers.shape != (self.num_classes, self.dim) or self.initialized.shape != (self.num_classes,):
            raise DimensionError("centre array does not match num_classes × dim")

    @classmethod
    def from_centers(cls, centers, alpha: float = 0.5) -> "CenterBank":
        centers = np.asarray(centers, dtype=np.float64)
        k, d = centers.shape
        return cls(k, d, alpha, centers, np.ones(k, dtype=bool))

    def seed(self, features, labels) -> "CenterBank":
        """Initialise every still-empty class that occurs in the batch to its batch mean."""
        x, y = _batch_arrays(features, labels, self.dim)
        for j in np.unique(y):
            if not self.initialized[j]:
                self.centers[j] = x[y == j].mean(axis=0)
                self.initialized[j] = True
        return self


def _batch_arrays(features, labels, dim):
    x = features.data if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != dim or y.shape != (x.shape[0],):
        raise DimensionError(f"expected m×{dim} features with m labels, got {x.shape} and {y.shape}")
    return x, y


def update_centers(bank: CenterBank, features, labels) -> CenterBank:
    """Move each centre present in the batch toward its members' mean.

    For class ``j`` with ``n_j`` members, ``c_j -= alpha * sum(c_j - x_i) / (1 + n_j)``.
    Classes seen for the first time are seeded with their batch mean instead.
    """
    x, y = _batch_arrays(features, labels, bank.dim)
    if y.size == 0:
        return bank
    fresh = [j for j in np.unique(y) if not bank.initialized[j]]
    for j in np.unique(y):
        if j in fresh:
            continue
        members = x[y == j]
        step = (bank.centers[j] * len(members) - members.sum(axis=0)) / (1 + len(members))
        bank.centers[j] = bank.centers[j] - bank.alpha * step
    if fresh:
        bank.seed(x[np.isin(y, fresh)], y[np.isin(y, fresh)])
    return bank


# ---------------------------------------------------------------------------
# activation regularisers
# ---------------------------------------------------------------------------


def l2_reg(activations: Tensor) -> Tensor:
    """Squared L2 norm of the activations, averaged over the batch."""
    a = as_tensor(activations)
    return tsum(square(a)) * (1.0 / a.shape[0])


def l1_reg(activations: Tensor) -> Tensor:
    """L1 norm of the activations, averaged over the batch."""
    a = as_tensor(activations)
    return tsum(tabs(a)) * (1.0 / a.shape[0])


# ---------------------------------------------------------------------------
# centre-based losses
# ---------------------------------------------------------------------------


def _squared_distances(features: Tensor, centers: np.ndarray) -> Tensor:
    m, d = features.shape
    diff = reshape(features, (m, 1, d)) - Tensor(centers[None, :, :])
    return tsum(square(diff), axis=2)


def _check_batch(features, labels, bank: CenterBank):
    x = as_tensor(features)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != bank.dim:
        raise DimensionError(f"features must be m×{bank.dim}, got {x.shape}")
    if y.shape != (x.shape[0],):
        raise DimensionError(f"expected {x.shape[0]} labels, got shape {y.shape}")
    if x.shape[0] == 0:
        raise ValidationError("empty batch")
    if y.min() < 0 or y.max() >= bank.num_classes:
        raise ValidationError(f"labels must lie in [0, {bank.num_classes})")
    missing = sorted(set(np.unique(y[~bank.initialized[y]]).tolist()))
    if missing:
        raise UsageError(f"centre bank has no centre yet for class(es) {missing}")
    return x, y


def _other_class_mask(y: np.ndarray, bank: CenterBank) -> np.ndarray:
    if bank.initialized.sum() < 2:
        raise UsageError("at least two initialised classes are needed for a separation term")
    mask = np.broadcast_to(bank.initialized, (y.size, bank.num_classes)).copy()
    mask[np.arange(y.size), y] = False
    return mask


def center_loss(features, labels, bank: CenterBank) -> Tensor:
    """``(1/2m) * sum_i ||x_i - c_{y_i}||^2``."""
    x, y = _check_batch(features, labels, bank)
    own = pick(_squared_distances(x, bank.centers), y)
    return tsum(own) * (0.5 / x.shape[0])


def contrastive_center_loss(features, labels, bank: CenterBank, delta: float = 1e-6) -> Tensor:
    """Own-centre distance over the summed distance to every other centre (plus delta)."""
    x, y = _check_batch(features, labels, bank)
    mask = _other_class_mask(y, bank)
    dist = _squared_distances(x, bank.centers)
    ratio = pick(dist, y) / (tsum(dist * mask.astype(np.float64), axis=1) + delta)
    return tsum(ratio) * (1.0 / x.shape[0])


def silhouette_loss(features, labels, bank: CenterBank, delta: float = 1e-6) -> Tensor:
    """Own-centre distance over the distance to the nearest other centre (plus delta)."""
    x, y = _check_batch(features, labels, bank)
    mask = _other_class_mask(y, bank)
    dist = _squared_distances(x, bank.centers)
    ratio = pick(dist, y) / (masked_row_min(dist, mask) + delta)
    return tsum(ratio) * (1.0 / x.shape[0])


def combined_loss(class_loss: Tensor, aux_loss: Tensor | None, lambda_aux: float) -> Tensor:
    """``L_class + lambda_aux * L_aux``."""
    if aux_loss is None:
        return class_loss
    return class_loss + aux_loss * float(lambda_aux)


def aux_loss(cfg: LossConfig, features: Tensor, labels, bank: CenterBank | None = None) -> Tensor | None:
    """Evaluate the auxiliary term selected by ``cfg`` (``None`` for kind ``none``)."""
    if cfg.kind == "none":
        return None
    if cfg.kind == "l2":
        return l2_reg(features)
    if cfg.kind == "l1":
        return l1_reg(features)
    if bank is None:
        raise UsageError(f"{cfg.kind} loss needs a centre bank")
    if cfg.kind == "center":
        return center_loss(features, labels, bank)
    if cfg.kind == "contrastive_center":
        return contrastive_center_loss(features, labels, bank, cfg.delta)
    return silhouette_loss(features, labels, bank, cfg.delta)

"""Clustering-regularised feature learning with a retracted projection layer."""

from .config import METHODS, RunConfig
from .data import BatchPlan, Dataset, batches, load_idx, subset
from .grassmann import orthonormality_error, retract, svd_thin
from .losses import (
    CenterBank,
    LossConfig,
    center_loss,
    combined_loss,
    contrastive_center_loss,
    l1_reg,
    l2_reg,
    silhouette_loss,
    update_centers,
)
from .model import ModelState, build_model
from .tensor import Tensor, backward, no_grad
from .train import TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "BatchPlan",
    "CenterBank",
    "Dataset",
    "LossConfig",
    "ModelState",
    "RunConfig",
    "Tensor",
    "TrainHistory",
    "backward",
    "batches",
    "build_model",
    "center_loss",
    "combined_loss",
    "contrastive_center_loss",
    "l1_reg",
    "l2_reg",
    "load_idx",
    "no_grad",
    "orthonormality_error",
    "retract",
    "silhouette_loss",
    "subset",
    "svd_thin",
    "train",
    "update_centers",
]

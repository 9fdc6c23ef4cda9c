"""Combined-loss SGD training with centre updates and projection retraction."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from . import functional as F
from .config import RunConfig
from .data import BatchPlan, Dataset, batches, load_idx, subset
from .errors import ConfigError, TrainingError
from .grassmann import orthonormality_error, retract
from .losses import CenterBank, aux_loss, combined_loss, update_centers
from .model import NUM_CLASSES, ModelState, build_model
from .tensor import backward

log = logging.getLogger(__name__)

StepHook = Callable[[ModelState, int, int], None]


@dataclass
class EpochRecord:
    epoch: int
    class_loss: float
    aux_loss: float
    combined_loss: float
    train_accuracy: float
    test_accuracy: float
    ortho_error: float
    seconds: float = 0.0


# wall-clock time is excluded so identical runs give identical files
HISTORY_COLUMNS = [f.name for f in fields(EpochRecord) if f.name != "seconds"]


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def to_rows(self) -> list[dict]:
        return [{k: v for k, v in asdict(r).items() if k in HISTORY_COLUMNS} for r in self.records]

    @classmethod
    def from_rows(cls, rows) -> "TrainHistory":
        return cls([EpochRecord(**{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}) for row in rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTORY_COLUMNS)
            for row in self.to_rows():
                writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])

    def write_timing(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "seconds"])
            for r in self.records:
                writer.writerow([r.epoch, f"{r.seconds:.3f}"])


def load_datasets(cfg: RunConfig, need_test: bool = True) -> tuple[Dataset, Optional[Dataset]]:
    """Load (and optionally subsample) the train and test splits named by ``cfg``."""
    train_paths = cfg.resolve_paths("train")
    train = load_idx(*train_paths, name=cfg.dataset, split="train")
    if cfg.train_n:
        train = subset(train, min(cfg.train_n, len(train)), cfg.seed)
    test = None
    if need_test:
        try:
            test_paths = cfg.resolve_paths("test")
        except ConfigError:
            if cfg.test_images or cfg.test_labels:
                raise
            log.warning("no test split found; test accuracy will be NaN")
        else:
            test = load_idx(*test_paths, name=cfg.dataset, split="test")
            if cfg.test_n:
                test = subset(test, min(cfg.test_n, len(test)), cfg.seed + 1)
    return train, test


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def accuracy_of(model: ModelState, data: Dataset) -> float:
    if len(data) == 0:
        return math.nan
    _, logits = model.predict(data.images)
    return float(np.mean(F.predict_labels(logits) == data.labels))


def train(
    cfg: RunConfig,
    train_data: Optional[Dataset] = None,
    test_data: Optional[Dataset] = None,
    step_hook: Optional[StepHook] = None,
) -> tuple[ModelState, TrainHistory]:
    """Run ``cfg.epochs`` epochs of mini-batch SGD.

    Per batch: forward, cross-entropy plus weighted auxiliary loss, backward,
    SGD step, retraction of the projection (when the method asks for it), then
    the running-average centre update with the batch's features.
    """
    if train_data is None:
        train_data, loaded_test = load_datasets(cfg)
        test_data = test_data if test_data is not None else loaded_test
    model = build_model(cfg)
    loss_cfg = cfg.loss_config()
    bank = CenterBank(NUM_CLASSES, cfg.d_feat, cfg.alpha) if loss_cfg.uses_centers else None
    if bank is not None:
        model.extras["centers"] = bank
    history = TrainHistory()
    projection = model.projection

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        plan = BatchPlan.create(len(train_data), cfg.batch_size, epoch_seed(cfg.seed, epoch))
        sums = np.zeros(3)
        correct = 0
        seen = 0
        for index, (images, labels) in enumerate(batches(train_data, plan)):
            features, logits = model.forward(images)
            class_loss = F.softmax_cross_entropy(logits, labels)
            aux = None
            if bank is not None:
                bank.seed(features.data, labels)
                if loss_cfg.kind == "center" or bank.initialized.sum() >= 2:
                    aux = aux_loss(loss_cfg, features, labels, bank)
            else:
                aux = aux_loss(loss_cfg, features, labels)
            total = combined_loss(class_loss, aux, loss_cfg.lambda_aux)
            terms = {
                "class_loss": class_loss.item(),
                "aux_loss": aux.item() if aux is not None else 0.0,
                "combined_loss": total.item(),
            }
            if not all(math.isfinite(v) for v in terms.values()):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {index}: {terms}", epoch=epoch, batch=index, terms=terms
                )
            backward(total)
            F.sgd_step(model, model.gradients(), cfg.lr)
            model.zero_grad()
            if model.retract:
                projection.data = retract(projection.data)
            if bank is not None:
                update_centers(bank, features.data, labels)

            m = len(labels)
            sums += m * np.array([terms["class_loss"], terms["aux_loss"], terms["combined_loss"]])
            correct += int(np.sum(F.predict_labels(logits.data) == labels))
            seen += m
            if step_hook is not None:
                step_hook(model, epoch, index)

        test_acc = accuracy_of(model, test_data) if test_data is not None else math.nan
        record = EpochRecord(
            epoch=epoch,
            class_loss=sums[0] / seen,
            aux_loss=sums[1] / seen,
            combined_loss=sums[2] / seen,
            train_accuracy=correct / seen,
            test_accuracy=test_acc,
            ortho_error=orthonormality_error(projection.data),
            seconds=time.perf_counter() - started,
        )
        history.append(record)
        log.info(
            "epoch %d  loss %.4f (cls %.4f aux %.4f)  train %.4f  test %.4f  ortho %.2e  %.1fs",
            epoch, record.combined_loss, record.class_loss, record.aux_loss,
            record.train_accuracy, record.test_accuracy, record.ortho_error, record.seconds,
        )
    return model, history

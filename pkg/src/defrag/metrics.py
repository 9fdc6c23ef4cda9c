"""Accuracy, clustering quality and k-NN evaluation over learned features."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import DegeneracyError, DimensionError, ValidationError
from .functional import predict_labels
from .losses import CenterBank, silhouette_loss
from .tensor import Tensor, no_grad

CHUNK = 512


@dataclass
class FeatureDump:
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DimensionError(f"features {self.features.shape} do not match {len(self.labels)} labels")
        split = np.asarray(self.split, dtype=object)
        self.split = np.full(len(self.labels), split, dtype=object) if split.ndim == 0 else split

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def write_csv(self, path) -> None:
        header = [f"feat_{i}" for i in range(self.dim)] + ["label", "split"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for vec, lab, sp in zip(self.features, self.labels, self.split):
                writer.writerow([repr(float(v)) for v in vec] + [int(lab), sp])

    @classmethod
    def read_csv(cls, path) -> "FeatureDump":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = len(header) - 2
        feats = np.array([[float(v) for v in r[:d]] for r in body]).reshape(len(body), d)
        return cls(feats, [int(r[d]) for r in body], [r[d + 1] for r in body])


def accuracy(model, dataset: Dataset) -> float:
    """Fraction of samples whose arg-max logit (lowest index on ties) equals the label."""
    if len(dataset) == 0:
        raise ValidationError("accuracy of an empty dataset is undefined")
    _, logits = model.predict(dataset.images)
    return float(np.mean(predict_labels(logits) == dataset.labels))


def extract_features(model, dataset: Dataset, metadata=None) -> FeatureDump:
    features, _ = model.predict(dataset.images)
    return FeatureDump(features, dataset.labels, dataset.split, dict(metadata or {}))


def export_features(model, dataset: Dataset, path, metadata=None) -> FeatureDump:
    dump = extract_features(model, dataset, metadata)
    dump.write_csv(path)
    return dump


def _classes(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    return classes, inverse, counts


def silhouette_samples(features, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample Rousseeuw silhouette and a flag marking members of singleton classes.

    ``a`` is the mean distance to the other members of the own class, ``b`` the
    smallest mean distance to another class, ``s = (b - a) / max(a, b)``;
    singletons and ``max(a, b) == 0`` give 0.
    """
    x = np.asarray(features, dtype=np.float64)
    _, inverse, counts = _classes(np.asarray(labels))
    k = len(counts)
    if k < 2:
        raise ValidationError("silhouette needs at least two classes")
    onehot = np.zeros((len(x), k))
    onehot[np.arange(len(x)), inverse] = 1.0
    scores = np.zeros(len(x))
    for start in range(0, len(x), CHUNK):
        stop = min(start + CHUNK, len(x))
        per_class = cdist(x[start:stop], x) @ onehot
        own = inverse[start:stop]
        rows = np.arange(stop - start)
        own_n = counts[own]
        a = np.divide(per_class[rows, own], own_n - 1, out=np.zeros(stop - start), where=own_n > 1)
        means = per_class / counts
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        s = np.divide(b - a, denom, out=np.zeros(stop - start), where=denom > 0)
        s[own_n == 1] = 0.0
        scores[start:stop] = s
    return scores, counts[inverse] == 1


def silhouette_score(dump: FeatureDump) -> float:
    """Mean classical silhouette over all samples, Euclidean distance (higher is better)."""
    scores, singleton = silhouette_samples(dump.features, dump.labels)
    if singleton.any():
        lone = sorted(set(dump.labels[singleton].tolist()))
        warnings.warn(f"singleton class(es) {lone} scored as 0", RuntimeWarning, stacklevel=2)
    return float(scores.mean())


def silhouette_loss_metric(dump: FeatureDump, delta: float = 1e-6) -> float:
    """Mean per-sample silhouette-loss ratio with centres set to the dump's class means (lower is better)."""
    classes = np.unique(dump.labels)
    if len(classes) < 2:
        raise ValidationError("silhouette loss metric needs at least two classes")
    k = int(classes.max()) + 1
    centers = np.zeros((k, dump.dim))
    present = np.zeros(k, dtype=bool)
    for c in classes:
        centers[c] = dump.features[dump.labels == c].mean(axis=0)
        present[c] = True
    bank = CenterBank(k, dump.dim, centers=centers, initialized=present)
    with no_grad():
        return silhouette_loss(Tensor(dump.features), dump.labels, bank, delta).item()


def distance_ratio(dump: FeatureDump) -> float:
    """Mean within-class pairwise distance over mean between-class pairwise distance."""
    x, labels = dump.features, dump.labels
    _, inverse, counts = _classes(labels)
    if len(counts) < 2:
        raise ValidationError("distance ratio needs at least two classes")
    n = len(x)
    within_pairs = float(np.sum(counts * (counts - 1)))
    between_pairs = float(n * n - np.sum(counts * counts))
    within = between = 0.0
    for start in range(0, n, CHUNK):
        stop = min(start + CHUNK, n)
        dist = cdist(x[start:stop], x)
        same = inverse[start:stop, None] == inverse[None, :]
        within += float(dist[same].sum())
        between += float(dist[~same].sum())
    if between == 0.0:
        raise DegeneracyError("all points coincide; between-class distance is zero")
    if within_pairs == 0:
        return 0.0
    return (within / within_pairs) / (between / between_pairs)


def knn_predict(train_x, train_y, test_x, k: int) -> np.ndarray:
    """Majority vote of the ``k`` nearest training points (Euclidean).

    Neighbours are ranked by (distance, training index). Vote ties go to the
    class with the smaller summed neighbour distance, then the lower class index.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    test_x = np.asarray(test_x, dtype=np.float64)
    if len(train_x) == 0:
        raise ValidationError("k-NN needs a non-empty training set")
    if k < 1 or k > len(train_x):
        raise ValidationError(f"k must lie in [1, {len(train_x)}], got {k}")
    num_classes = int(train_y.max()) + 1
    out = np.empty(len(test_x), dtype=np.int64)
    for start in range(0, len(test_x), CHUNK):
        dist = cdist(test_x[start : start + CHUNK], train_x)
        part = np.argpartition(dist, k - 1, axis=1)[:, :k]
        kth = np.take_along_axis(dist, part, axis=1).max(axis=1)
        for row, (d, bound) in enumerate(zip(dist, kth)):
            cand = np.flatnonzero(d <= bound)
            nearest = cand[np.lexsort((cand, d[cand]))[:k]]
            votes = np.bincount(train_y[nearest], minlength=num_classes)
            total = np.bincount(train_y[nearest], weights=d[nearest], minlength=num_classes)
            tied = np.flatnonzero(votes == votes.max())
            out[start + row] = tied[np.lexsort((tied, total[tied]))[0]]
    return out


def knn_accuracy(train_dump: FeatureDump, test_dump: FeatureDump, k: int) -> float:
    pred = knn_predict(train_dump.features, train_dump.labels, test_dump.features, k)
    return float(np.mean(pred == test_dump.labels))


REPORT_KEYS = (
    "accuracy",
    "silhouette_classical",
    "silhouette_loss_metric",
    "distance_ratio",
    "knn_accuracy@1",
    "knn_accuracy@5",
)


def evaluate(model, train: Dataset, test: Dataset, delta: float = 1e-6) -> dict[str, float]:
    """The six-metric report computed on test features (k-NN references train features)."""
    test_features, test_logits = model.predict(test.images)
    test_dump = FeatureDump(test_features, test.labels, test.split)
    train_dump = extract_features(model, train)
    return {
        "accuracy": float(np.mean(predict_labels(test_logits) == test.labels)),
        "silhouette_classical": silhouette_score(test_dump),
        "silhouette_loss_metric": silhouette_loss_metric(test_dump, delta),
        "distance_ratio": distance_ratio(test_dump),
        "knn_accuracy@1": knn_accuracy(train_dump, test_dump, 1),
        "knn_accuracy@5": knn_accuracy(train_dump, test_dump, 5),
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")

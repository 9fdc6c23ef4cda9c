"""MNIST-family IDX ingestion, stratified subsets and seeded mini-batches."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, ValidationError
from .tensor import Tensor

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10

# file stems as distributed; loaders also accept a ``.gz`` suffix
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray  # N×1×H×W float64 in [0, 1]
    labels: np.ndarray  # N int64
    name: str = ""
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[1] != 1:
            raise FormatError(f"images must be N×1×H×W, got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise FormatError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.name, self.split)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=NUM_CLASSES)


@dataclass(frozen=True)
class BatchPlan:
    seed: int
    batch_size: int
    order: np.ndarray

    @classmethod
    def create(cls, n: int, batch_size: int, seed: int) -> "BatchPlan":
        if batch_size < 1:
            raise ValidationError(f"batch size must be positive, got {batch_size}")
        order = np.random.default_rng(seed).permutation(n)
        return cls(seed, batch_size, order)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def _parse_idx(raw: bytes, path, expected_magic: int, ndim: int) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes, need {header})")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims))
    body = len(raw) - header
    if body < need:
        raise FormatError(f"{path}: truncated payload, dims {dims} need {need} bytes but {body} present")
    if body > need:
        raise FormatError(f"{path}: {body - need} trailing bytes after payload for dims {dims}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, name: str = "", split: str = "train") -> Dataset:
    """Load an IDX image/label pair (raw or gzip) and scale pixels by 1/255."""
    pixels = _parse_idx(_read_bytes(images_path), images_path, IMAGES_MAGIC, 3)
    labels = _parse_idx(_read_bytes(labels_path), labels_path, LABELS_MAGIC, 1)
    if len(pixels) != len(labels):
        raise FormatError(f"count mismatch: {images_path} holds {len(pixels)} images, {labels_path} holds {len(labels)} labels")
    if len(labels) and labels.max() >= NUM_CLASSES:
        raise FormatError(f"{labels_path}: label value {int(labels.max())} outside [0, {NUM_CLASSES})")
    images = pixels.astype(np.float64)[:, None, :, :] / 255.0
    return Dataset(images, labels.astype(np.int64), name, split)


def find_split_files(root, split: str) -> tuple[Path, Path]:
    """Locate the image/label files of ``split`` under ``root``, preferring uncompressed."""
    paths = []
    for stem in SPLIT_FILES[split]:
        for candidate in (Path(root) / stem, Path(root) / f"{stem}.gz"):
            if candidate.exists():
                paths.append(candidate)
                break
        else:
            raise FileNotFoundError(f"no {stem}[.gz] under {root}")
    return paths[0], paths[1]


def subset(d: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified random subset of ``n`` items, shuffled, deterministic per seed.

    Quotas follow the class proportions of ``d``; leftover slots after flooring go
    to the classes with the largest fractional remainder (lowest class first on ties).
    """
    total = len(d)
    if n < 1 or n > total:
        raise ValidationError(f"subset size must lie in [1, {total}], got {n}")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(d.labels, return_counts=True)
    exact = counts * (n / total)
    quota = np.floor(exact).astype(np.int64)
    short = n - int(quota.sum())
    if short:
        by_remainder = np.lexsort((classes, -(exact - quota)))
        quota[by_remainder[:short]] += 1
    picked = []
    for cls, q in zip(classes, quota):
        members = np.flatnonzero(d.labels == cls)
        picked.append(rng.choice(members, size=q, replace=False))
    index = np.concatenate(picked)
    return d.take(index[rng.permutation(len(index))])


def batches(d: Dataset, plan: BatchPlan) -> Iterator[tuple[Tensor, np.ndarray]]:
    """Yield ``(images, labels)`` mini-batches covering ``plan.order``; the last may be short."""
    if len(plan.order) != len(d):
        raise ValidationError(f"plan covers {len(plan.order)} items but dataset has {len(d)}")
    for start in range(0, len(d), plan.batch_size):
        idx = plan.order[start : start + plan.batch_size]
        yield Tensor(d.images[idx]), d.labels[idx]

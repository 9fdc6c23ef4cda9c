"""Versioned binary checkpoint container.

Layout (little-endian)::

    8 bytes   magic "DFRGCKPT"
    u32       format version
    u32       metadata length, then UTF-8 JSON (model settings, config, history)
    u32       tensor count
    per tensor: u16 name length, name, u32 rank, rank x u64 dims, float64 data
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError
from .losses import CenterBank
from .model import ModelState
from .tensor import Tensor
from .train import TrainHistory

MAGIC = b"DFRGCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    model: ModelState
    history: TrainHistory
    config: Optional[dict]


def save_checkpoint(model: ModelState, history: TrainHistory, path, config=None) -> None:
    bank = model.extras.get("centers")
    meta = {
        "model": {
            "feature_activation": model.feature_activation,
            "d_feat": model.d_feat,
            "method": model.method,
            "retract": model.retract,
            "center_alpha": bank.alpha if bank is not None else None,
        },
        "config": config.to_dict() if hasattr(config, "to_dict") else config,
        "history": history.to_rows(),
    }
    tensors = [(name, p.data) for name, p in model.params.items()]
    if bank is not None:
        tensors += [("centers.value", bank.centers), ("centers.initialized", bank.initialized.astype(np.float64))]

    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(f"{self.path}: truncated while reading {what}")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version} (this build reads {VERSION})")
    (meta_len,) = r.unpack("<I", "metadata length")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt metadata ({exc})") from None
    (count,) = r.unpack("<I", "tensor count")
    arrays = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode()
        (rank,) = r.unpack("<I", f"{name} rank")
        dims = r.unpack(f"<{rank}Q", f"{name} dims")
        n = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(r.take(8 * n, f"{name} data"), dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - r.pos} unexpected trailing bytes")

    settings = meta["model"]
    bank = None
    if "centers.value" in arrays:
        bank = CenterBank(
            *arrays["centers.value"].shape,
            alpha=settings["center_alpha"],
            centers=arrays.pop("centers.value"),
            initialized=arrays.pop("centers.initialized") > 0.5,
        )
    params = {name: Tensor(arr, requires_grad=True, name=name) for name, arr in arrays.items()}
    model = ModelState(
        params,
        feature_activation=settings["feature_activation"],
        d_feat=settings["d_feat"],
        method=settings["method"],
        retract=settings["retract"],
    )
    if bank is not None:
        model.extras["centers"] = bank
    return Checkpoint(model, TrainHistory.from_rows(meta["history"]), meta.get("config"))


def load_checkpoint(path) -> tuple[ModelState, TrainHistory]:
    ckpt = read_checkpoint(path)
    return ckpt.model, ckpt.history

"""Network layers, activations, the classification loss and the SGD update."""

from __future__ import annotations

from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, UsageError, ValidationError
from .tensor import Tensor, as_tensor, make_node

KERNEL = 5
SOFTPLUS_LINEAR_ABOVE = 30.0


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation of ``N×C×H×W`` input with ``F×C×5×5`` kernels."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d needs 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if h < kh or w < kw:
        raise DimensionError(f"conv2d input {x.shape} smaller than kernel {kernel.shape}")
    if bias.shape != (f,):
        raise DimensionError(f"conv2d bias must have shape ({f},), got {bias.shape}")
    ho, wo = h - kh + 1, w - kw + 1

    # (N, C, Ho, Wo, kh, kw) -> rows of (C*kh*kw) patches, one per output pixel
    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = kernel.data.reshape(f, c * kh * kw)
    out = cols @ kmat.T
    out += bias.data
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def bw(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gk = (gm.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gb = gm.sum(axis=0) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gm @ kmat).reshape(n, ho, wo, c, kh, kw)
            gx = np.zeros(x.shape)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + ho, j : j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gx, gk, gb

    return make_node(np.ascontiguousarray(out), (x, kernel, bias), bw, "conv2d")


def maxpool2(x: Tensor) -> Tensor:
    """Non-overlapping 2×2 max pooling.

    Gradient goes to the window maximum; ties go to the first element in
    row-major order within the window.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"maxpool2 needs N×C×H×W input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 needs even spatial dims, got {h}×{w}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        routed = np.zeros(blocks.shape)
        np.put_along_axis(routed, arg[..., None], g[..., None], axis=-1)
        return (routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x.shape),)

    return make_node(out, (x,), bw, "maxpool2")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return make_node(np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),), "relu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(x: Tensor) -> Tensor:
    """``ln(1 + e^x)``, returning ``x`` itself above 30 to avoid overflow."""
    x = as_tensor(x)
    z = x.data
    out = np.where(z > SOFTPLUS_LINEAR_ABOVE, z, np.log1p(np.exp(np.minimum(z, SOFTPLUS_LINEAR_ABOVE))))
    return make_node(out, (x,), lambda g: (g * _sigmoid(z),), "softplus")


def linear(x: Tensor) -> Tensor:
    """Identity activation (kept as a node so graphs look alike across activations)."""
    x = as_tensor(x)
    return make_node(x.data.copy(), (x,), lambda g: (g,), "linear")


ACTIVATIONS = {"relu": relu, "softplus": softplus, "linear": linear}


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch-mean categorical cross-entropy of ``m×k`` logits against class indices."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be m×k, got {logits.shape}")
    m, k = logits.shape
    if m < 1:
        raise ValidationError("softmax_cross_entropy needs at least one sample")
    if labels.shape != (m,):
        raise DimensionError(f"expected {m} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"labels must be integers in [0, {k})")
    rows = np.arange(m)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = np.mean(lse - shifted[rows, labels])

    def bw(g):
        probs = np.exp(shifted - lse[:, None])
        probs[rows, labels] -= 1.0
        return (probs * (g / m),)

    return make_node(np.asarray(loss), (logits,), bw, "softmax_cross_entropy")


def predict_labels(logits: np.ndarray) -> np.ndarray:
    """Argmax class per row; ``np.argmax`` already resolves ties to the lowest index."""
    return np.argmax(logits, axis=1)


def sgd_step(params, grads: Mapping[str, np.ndarray], lr: float):
    """In-place ``p <- p - lr * g`` for every named parameter; returns ``params``."""
    if not lr >= 0:
        raise ValidationError(f"learning rate must be non-negative, got {lr}")
    named = params.params if hasattr(params, "params") else params
    missing = [name for name in named if name not in grads]
    if missing:
        raise UsageError(f"no gradient for parameter(s): {', '.join(missing)}")
    for name, p in named.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        p.data -= lr * g
    return params

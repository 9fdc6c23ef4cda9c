"""Per-sample loop references for the clustering losses and the retraction.

These deliberately avoid the vectorised engine paths so they can serve as
independent checks.
"""

from __future__ import annotations

import numpy as np


def _sqdist(a, b) -> float:
    return float(sum((float(u) - float(v)) ** 2 for u, v in zip(a, b)))


def center_loss_loop(x, y, centers) -> float:
    total = 0.0
    for xi, yi in zip(x, y):
        total += _sqdist(xi, centers[yi])
    return total / (2 * len(x))


def contrastive_center_loss_loop(x, y, centers, delta) -> float:
    total = 0.0
    for xi, yi in zip(x, y):
        others = 0.0
        for j, cj in enumerate(centers):
            if j != yi:
                others += _sqdist(xi, cj)
        total += _sqdist(xi, centers[yi]) / (others + delta)
    return total / len(x)


def silhouette_loss_loop(x, y, centers, delta) -> float:
    total = 0.0
    for xi, yi in zip(x, y):
        nearest = min(_sqdist(xi, cj) for j, cj in enumerate(centers) if j != yi)
        total += _sqdist(xi, centers[yi]) / (nearest + delta)
    return total / len(x)


def polar_factor(m: np.ndarray) -> np.ndarray:
    """Orthonormal polar factor ``M (M^T M)^{-1/2}`` via a symmetric eigendecomposition."""
    w, q = np.linalg.eigh(m.T @ m)
    return m @ (q / np.sqrt(w)) @ q.T

"""Central finite-difference checks for engine gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad, tsum

H = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _scalarize(out: Tensor, weights: Optional[np.ndarray]) -> Tensor:
    if out.size == 1:
        return out
    return tsum(out * weights)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = H, coords=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place), optionally at chosen flat coords."""
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    grad = np.zeros(len(coords))
    for n, i in enumerate(coords):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        grad[n] = (up - down) / (2.0 * h)
    return grad


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    wrt: Optional[Sequence[int]] = None,
    h: float = H,
    seed: int = 0,
    max_coords: Optional[int] = None,
) -> list[float]:
    """Relative error between backprop and central differences for each input in ``wrt``.

    Non-scalar outputs are reduced with fixed random weights so every output
    entry contributes. ``max_coords`` limits the checked coordinates per input
    to a random sample (for large parameter tensors).
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)
    tensors = [Tensor(a, requires_grad=(i in wrt)) for i, a in enumerate(arrays)]
    for t, a in zip(tensors, arrays):
        t.data = a  # share storage so perturbations are seen by fn

    out = fn(*tensors)
    weights = None if out.size == 1 else rng.normal(size=out.shape)
    backward(_scalarize(out, weights))

    def value() -> float:
        with no_grad():
            return _scalarize(fn(*tensors), weights).item()

    errors = []
    for i in wrt:
        analytic = tensors[i].grad.reshape(-1)
        coords = None
        if max_coords is not None and analytic.size > max_coords:
            coords = np.sort(rng.choice(analytic.size, size=max_coords, replace=False))
            analytic = analytic[coords]
        numeric = numeric_gradient(value, arrays[i], h, coords)
        errors.append(relative_error(analytic, numeric))
    return errors

"""Thin SVD by one-sided Jacobi rotations and the ``U V^T`` retraction.

The retraction maps a ``p×q`` (``p >= q``) projection matrix to the nearest
matrix with orthonormal columns in Frobenius norm.
"""

from __future__ import annotations

import numpy as np

from .errors import DegeneracyError, DimensionError, ValidationError

MAX_SWEEPS = 60
# a column pair counts as orthogonal once |<u_i,u_j>| <= ROTATION_TOL * ||u_i|| ||u_j||
ROTATION_TOL = 1e-15
RANK_TOL = 1e-12


def _as_matrix(m) -> np.ndarray:
    a = np.array(m.data if hasattr(m, "data") and not isinstance(m, np.ndarray) else m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValidationError("matrix has non-finite entries")
    return a


def svd_thin(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``U (p×q), S (q,), V (q×q)`` with ``m = U @ diag(S) @ V.T``.

    ``S`` is non-negative and descending. Sweeps stop once no pair needs a
    rotation or after ``MAX_SWEEPS``; the stopping rule is relative to each
    pair's column norms, which implies the absolute bound
    ``|gram_ij| < 1e-14 * ||m||_F^2``.
    """
    a = _as_matrix(m)
    p, q = a.shape
    if p < q:
        raise DimensionError(f"svd_thin needs rows >= cols, got {a.shape}; transpose first")
    u = a.copy(order="F")
    v = np.eye(q, order="F")
    for _ in range(MAX_SWEEPS):
        rotated = False
        for i in range(q - 1):
            for j in range(i + 1, q):
                ui, uj = u[:, i], u[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if abs(gamma) <= ROTATION_TOL * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                new_i = c * ui - s * uj
                u[:, j] = s * ui + c * uj
                u[:, i] = new_i
                vi, vj = v[:, i].copy(), v[:, j]
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            break

    sigma = np.linalg.norm(u, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, u, v = sigma[order], u[:, order], v[:, order]
    tiny = sigma <= np.finfo(float).tiny
    u[:, ~tiny] /= sigma[~tiny]
    if tiny.any():
        u = _complete_columns(u, ~tiny)
        sigma[tiny] = 0.0
    return np.ascontiguousarray(u), sigma, np.ascontiguousarray(v)


def _complete_columns(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns not in ``keep`` by an orthonormal completion (Gram-Schmidt on e_k)."""
    p = u.shape[0]
    basis = [u[:, c] for c in np.flatnonzero(keep)]
    candidates = iter(np.eye(p))
    for col in np.flatnonzero(~keep):
        while True:
            e = next(candidates)
            for _ in range(2):
                for b in basis:
                    e = e - (b @ e) * b
            norm = np.linalg.norm(e)
            if norm > 1e-8:
                u[:, col] = e / norm
                basis.append(u[:, col])
                break
    return u


def retract(m) -> np.ndarray:
    """Nearest column-orthonormal matrix: ``U @ V.T`` from the thin SVD of ``m``."""
    u, s, v = svd_thin(m)
    if s[-1] <= RANK_TOL * s[0]:
        raise DegeneracyError(
            f"projection matrix is rank deficient (smallest singular value {s[-1]:.3e}, "
            f"largest {s[0]:.3e}); re-initialise the feature layer"
        )
    return u @ v.T


def orthonormality_error(m) -> float:
    """``||M^T M - I||_F``."""
    a = np.asarray(m.data if hasattr(m, "data") and not isinstance(m, np.ndarray) else m, dtype=np.float64)
    return float(np.linalg.norm(a.T @ a - np.eye(a.shape[1])))

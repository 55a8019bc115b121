"""Proximal operators for the sparsity and low-rank regularizers."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .glm import Mode, RegressionSetting

Array = np.ndarray


def _check_t(t: float):
    if t < 0:
        raise ParameterError(f"prox threshold must be nonnegative, got {t}")


def group_shrink(norms: Array, t: float) -> Array:
    """Scale factor (||a|| - t)+ / ||a|| per group, 0 at the boundary."""
    # the tiny floor only matters when norms <= t, where the clip wins anyway
    return np.clip(1.0 - t / np.maximum(norms, 1e-300), 0.0, None)


def lag_group_view(A: Array, setting: RegressionSetting) -> Array:
    """View an m x p AR coefficient matrix as (m, M, N), lag axis second."""
    m, p = A.shape
    return A.reshape(m, setting.M, setting.N)


def prox_group(A: Array, t: float, setting: RegressionSetting) -> Array:
    """Group soft threshold over the per-edge vectors across AR lags.

    Each group collects the (i, j) entries of all M lag blocks; the group is
    scaled by (||a|| - t)/||a|| when ||a|| > t and zeroed otherwise.
    """
    _check_t(t)
    if t == 0:
        return A.copy()
    G = lag_group_view(np.asarray(A, dtype=float), setting)
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    return (G * group_shrink(norms, t)).reshape(A.shape)


def prox_symmetric_pairs(A: Array, t: float) -> Array:
    """Group soft threshold over unordered off-diagonal pairs (ij, ji).

    The diagonal is returned untouched; callers mask it separately when the
    setting requires structural zeros there.
    """
    _check_t(t)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"pair shrinkage needs a square matrix, got {A.shape}")
    if t == 0:
        return A.copy()
    norms = np.sqrt(A**2 + A.T**2)
    out = A * group_shrink(norms, t)
    np.fill_diagonal(out, np.diag(A))
    return out


def prox_penalty(A: Array, t: float, setting: RegressionSetting, kind: str) -> Array:
    """Dispatch to the group prox matching the penalty kind."""
    if kind == "granger_groups":
        return prox_group(A, t, setting)
    if kind == "symmetric_pairs":
        out = prox_symmetric_pairs(A, t)
        return out * setting.mask
    raise ParameterError(f"unknown penalty kind {kind!r}")


def penalty_value(A: Array, setting: RegressionSetting, kind: str) -> float:
    """Value of the group norm h(A) matching the penalty kind."""
    if kind == "granger_groups":
        G = lag_group_view(np.asarray(A, dtype=float), setting)
        return float(np.linalg.norm(G, axis=1).sum())
    if kind == "symmetric_pairs":
        A = np.asarray(A, dtype=float)
        norms = np.sqrt(A**2 + A.T**2)
        iu = np.triu_indices_from(A, k=1)
        return float(norms[iu].sum())
    raise ParameterError(f"unknown penalty kind {kind!r}")


def prox_nuclear(L: Array, t: float) -> Array:
    """Singular value soft thresholding."""
    _check_t(t)
    L = np.asarray(L, dtype=float)
    if t == 0:
        return L.copy()
    U, s, Vt = np.linalg.svd(L, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    return (U * s) @ Vt


def nuclear_norm(L: Array) -> float:
    return float(np.linalg.svd(L, compute_uv=False).sum())

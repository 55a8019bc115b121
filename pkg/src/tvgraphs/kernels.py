"""Time-localizing kernel weights for the left/center/right estimators."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError

Array = np.ndarray


class Side(Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


@dataclass(frozen=True)
class KernelWeights:
    """K x K weights; row k weights the samples used at time point k.

    The center kernel is symmetric around k with peak value one; the right
    kernel keeps only j >= k, and the left kernel is its transpose
    (j <= k).  The rows are deliberately not normalized: a one-sided
    window carries roughly half the total weight of the central one, so a
    fixed regularization weight binds the one-sided fits about twice as
    hard.  The residual comparison between sides relies on this.
    """

    W: Array
    side: Side
    bandwidth: float
    shape: str = "gaussian"

    @property
    def K(self) -> int:
        return self.W.shape[0]


def make_kernel(
    K: int, bandwidth: float, side: Side = Side.CENTER, shape: str = "gaussian"
) -> KernelWeights:
    """Build the weight matrix for one side.

    The unnormalized center entry is exp(-(j-k)^2 / (2 bandwidth^2)).
    """
    if K < 2:
        raise ParameterError(f"need K >= 2 time points, got {K}")
    if bandwidth <= 0:
        raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
    if shape != "gaussian":
        raise ParameterError(f"unknown kernel shape {shape!r}")
    offs = np.arange(K)[None, :] - np.arange(K)[:, None]  # offs[k, j] = j - k
    W = np.exp(-0.5 * (offs / bandwidth) ** 2)
    if side is Side.RIGHT:
        W = np.where(offs >= 0, W, 0.0)
    elif side is Side.LEFT:
        W = np.where(offs <= 0, W, 0.0)
    return KernelWeights(W=W, side=side, bandwidth=float(bandwidth), shape=shape)


def effective_weights(
    weights: KernelWeights, k: int, valid: Array, trunc: float = 1e-12
) -> Array:
    """Weights over the valid design indices.

    Entries below ``trunc`` times the row maximum are dropped so solvers can
    skip far-away samples.  Returns a length-len(valid) vector (may be all
    zero when the side window contains no usable samples).
    """
    w = weights.W[k, valid].copy()
    top = w.max(initial=0.0)
    if top <= 0.0:
        return np.zeros_like(w)
    w[w < trunc * top] = 0.0
    return w


def usable_count(weights: KernelWeights, k: int, valid: Array) -> int:
    """Number of valid samples with nonzero weight in row k."""
    return int(np.count_nonzero(weights.W[k, valid] > 0))

"""Regression settings, link functions, and per-time offset losses.

The loss for applying the network of time k to the sample at time j is the
Bregman-form expression

    f_j(A) = (1/m) * [ 1'( G*(y_j) + G(A x_j) ) - (A x_j)' y_j ]

where g = G' is the link, G* the convex conjugate of G.  For the identity
link this reduces to half the mean squared error,

    f_j(A) = 1/(2m) * ||y_j - A x_j||^2

since y^2/2 + t^2/2 - t*y = (y - t)^2 / 2.  Every solver in the package is
built on these primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import NumericOverflowError, ParameterError, ShapeError

Array = np.ndarray


@dataclass(frozen=True)
class LinkSpec:
    """A link function together with its convex potential and conjugate.

    ``g`` must be the derivative of ``G`` and monotone nondecreasing.
    """

    name: str
    g: Callable[[Array], Array]
    G: Callable[[Array], Array]
    G_star: Callable[[Array], Array]

    @property
    def is_identity(self) -> bool:
        return self.name == "identity"


def _logistic_g(v):
    out = np.empty_like(np.asarray(v, dtype=float))
    v = np.asarray(v, dtype=float)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _logistic_G(v):
    # log(1 + e^v), overflow-safe
    v = np.asarray(v, dtype=float)
    return np.logaddexp(0.0, v)


def _logistic_G_star(y):
    # y log y + (1-y) log(1-y), with 0 log 0 = 0
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inner = (y > 0) & (y < 1)
    yi = y[inner]
    out[inner] = yi * np.log(yi) + (1 - yi) * np.log(1 - yi)
    return out


IDENTITY_LINK = LinkSpec(
    name="identity",
    g=lambda v: np.asarray(v, dtype=float),
    G=lambda v: 0.5 * np.square(v),
    G_star=lambda y: 0.5 * np.square(y),
)

LOGISTIC_LINK = LinkSpec(
    name="logistic", g=_logistic_g, G=_logistic_G, G_star=_logistic_G_star
)

LINKS = {"identity": IDENTITY_LINK, "logistic": LOGISTIC_LINK}


def get_link(name: str) -> LinkSpec:
    try:
        return LINKS[name]
    except KeyError:
        raise ParameterError(
            f"unknown link {name!r}; available: {sorted(LINKS)}"
        ) from None


class Mode(Enum):
    DIRECTED_AR = "directed_ar"
    UNDIRECTED = "undirected"


@dataclass(frozen=True)
class RegressionSetting:
    """Dimensions and structural mask of one regression problem.

    Directed AR setting: predict x_k from the M previous samples, so the
    coefficient matrix is N x MN.  Undirected setting: extemporaneous
    regression of each node on the others at the same time, N x N with a
    zero diagonal enforced through the mask.
    """

    mode: Mode
    N: int
    M: int = 1
    J: Optional[Array] = None  # binary mask, m x p; None means default mask

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError(f"node count must be >= 1, got N={self.N}")
        if self.mode is Mode.DIRECTED_AR and self.M < 1:
            raise ParameterError(f"AR lag order must be >= 1, got M={self.M}")
        if self.mode is Mode.UNDIRECTED and self.M != 1:
            raise ParameterError("undirected setting requires M=1")
        if self.J is not None:
            J = np.asarray(self.J)
            if J.shape != (self.m, self.p):
                raise ShapeError(
                    f"mask shape {J.shape} != ({self.m}, {self.p})"
                )
            if not np.isin(J, (0, 1)).all():
                raise ParameterError("mask J must be binary")
            if self.mode is Mode.UNDIRECTED and np.any(np.diag(J) != 0):
                raise ParameterError(
                    "undirected mask must have a zero diagonal"
                )
            object.__setattr__(self, "J", J.astype(float))

    @property
    def m(self) -> int:
        return self.N

    @property
    def p(self) -> int:
        return self.M * self.N if self.mode is Mode.DIRECTED_AR else self.N

    @property
    def mask(self) -> Array:
        """The structural mask, materializing the default when J is None."""
        if self.J is not None:
            return self.J
        if self.mode is Mode.UNDIRECTED:
            return np.ones((self.N, self.N)) - np.eye(self.N)
        return np.ones((self.m, self.p))

    @property
    def first_valid(self) -> int:
        """First 0-based time index with a well-defined design."""
        return self.M if self.mode is Mode.DIRECTED_AR else 0


@dataclass(frozen=True)
class TimeSeriesPanel:
    """N x K observation matrix; column k is the sample at time k."""

    X: Array

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ShapeError(f"panel must be 2-d, got shape {X.shape}")
        if not np.isfinite(X).all():
            raise ParameterError("panel contains non-finite entries")
        object.__setattr__(self, "X", X)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]


def build_design(
    setting: RegressionSetting, panel: TimeSeriesPanel, j: int
) -> tuple[Array, Array]:
    """Return the (target, regressor) pair (y_j, x_j) at 0-based time j.

    Directed AR: y_j = X[:, j], x_j stacks the M previous columns newest
    first.  Undirected: y_j = x_j = X[:, j].
    """
    K = panel.K
    lo = setting.first_valid
    if not lo <= j < K:
        raise IndexError(
            f"time index {j} out of range [{lo}, {K - 1}] for "
            f"{setting.mode.value} design"
        )
    y = panel.X[:, j]
    if setting.mode is Mode.DIRECTED_AR:
        x = panel.X[:, j - setting.M : j][:, ::-1].T.reshape(-1)
        return y, x
    return y, y


def design_matrices(
    setting: RegressionSetting, panel: TimeSeriesPanel
) -> tuple[Array, Array, Array]:
    """All valid designs at once: (Y: m x n, X: p x n, valid time indices)."""
    idx = np.arange(setting.first_valid, panel.K)
    Y = panel.X[:, idx]
    if setting.mode is Mode.DIRECTED_AR:
        cols = [build_design(setting, panel, j)[1] for j in idx]
        X = np.stack(cols, axis=1)
    else:
        X = Y
    return Y, X, idx


def _theta(A: Array, x: Array) -> Array:
    theta = A @ x
    if not np.isfinite(theta).all():
        raise NumericOverflowError(
            "linear predictor has non-finite entries; "
            "check coefficient magnitudes"
        )
    return theta


def offset_loss(
    A: Array,
    j: int,
    setting: RegressionSetting,
    panel: TimeSeriesPanel,
    link: LinkSpec = IDENTITY_LINK,
) -> float:
    """Bregman loss of applying coefficient matrix A to the sample at time j."""
    y, x = build_design(setting, panel, j)
    theta = _theta(A, x)
    m = setting.m
    val = (np.sum(link.G_star(y)) + np.sum(link.G(theta)) - theta @ y) / m
    if not np.isfinite(val):
        raise NumericOverflowError(f"offset loss at j={j} is non-finite")
    return float(val)


def residual(
    A: Array,
    j: int,
    setting: RegressionSetting,
    panel: TimeSeriesPanel,
    link: LinkSpec = IDENTITY_LINK,
) -> Array:
    """g(A x_j) - y_j, the gradient of the offset loss w.r.t. the predictor
    (up to the 1/m factor)."""
    y, x = build_design(setting, panel, j)
    return link.g(_theta(A, x)) - y


def loss_gradient(
    A: Array,
    j: int,
    setting: RegressionSetting,
    panel: TimeSeriesPanel,
    link: LinkSpec = IDENTITY_LINK,
) -> Array:
    """Gradient of offset_loss w.r.t. A: (1/m) (g(Ax_j) - y_j) x_j', masked."""
    y, x = build_design(setting, panel, j)
    r = link.g(_theta(A, x)) - y
    return setting.mask * np.outer(r, x) / setting.m

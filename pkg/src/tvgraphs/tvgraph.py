"""Locally-linear kernel-weighted estimation of a time-varying graph sequence.

For every time point k (independently, hence trivially parallel) we solve

    min_{A, A'}  F_k(A, A') + lam * h(A)   [+ lam_star * ||L||_* on the
                                             optional low-rank block]

where F_k(A, A') = sum_j w_kj f_j(A + (j-k) A') is the kernel-weighted sum
of offset losses of the locally-linear predictor, by proximal gradient
descent with backtracking line search.  For the identity link F_k is a
quadratic in the stacked variable [A  A'], so each subproblem precomputes
the weighted Gram statistics once and every iteration costs two small
matrix products.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    NonconvergenceError,
    ParameterError,
)
from .glm import (
    IDENTITY_LINK,
    LinkSpec,
    Mode,
    RegressionSetting,
    TimeSeriesPanel,
    design_matrices,
)
from .kernels import KernelWeights, Side, effective_weights
from .prox import nuclear_norm, penalty_value, prox_nuclear, prox_penalty

Array = np.ndarray

_MAX_BACKTRACKS = 60
_DIVERGENCE_FACTOR = 1e3


@dataclass(frozen=True)
class PenaltySpec:
    """Sparsity penalty choice plus the optional latent low-rank weight."""

    kind: str = "granger_groups"  # or "symmetric_pairs"
    lam: float = 0.0
    lam_star: float = 0.0

    def __post_init__(self):
        if self.kind not in ("granger_groups", "symmetric_pairs"):
            raise ParameterError(f"unknown penalty kind {self.kind!r}")
        if self.lam < 0 or self.lam_star < 0:
            raise ParameterError("regularization weights must be nonnegative")


@dataclass
class GraphSequence:
    """K stacked vectorized graphs plus their local time derivatives.

    Row k of ``Acal`` is the row-major vectorization of the m x p coefficient
    matrix at time k.  Rows before ``valid_start`` (the AR warm-up) are zero
    and flagged undefined.
    """

    Acal: Array
    Aprime: Array
    setting: RegressionSetting
    Lcal: Optional[Array] = None
    side: Optional[Side] = None
    valid_start: int = 0

    @property
    def K(self) -> int:
        return self.Acal.shape[0]

    def graph(self, k: int) -> Array:
        return self.Acal[k].reshape(self.setting.m, self.setting.p)

    def deriv(self, k: int) -> Array:
        return self.Aprime[k].reshape(self.setting.m, self.setting.p)

    def latent(self, k: int) -> Optional[Array]:
        if self.Lcal is None:
            return None
        return self.Lcal[k].reshape(self.setting.m, self.setting.p)

    def effective(self, k: int) -> Array:
        """Coefficient matrix actually used for prediction: A_k (+ L_k)."""
        A = self.graph(k)
        L = self.latent(k)
        return A if L is None else A + L


class _KProblem:
    """Weighted local-linear loss at one time point, over valid designs.

    Works on the stacked variable B = [A + L, A'] of shape m x 2p.  For the
    identity link the data term is
        F(B) = (0.5 tr(B S B') - tr(B T') + c) / m
    with S, T, c precomputed; other links fall back to direct evaluation.
    """

    def __init__(self, setting, link, k, w, Y, X, idx):
        self.setting = setting
        self.link = link
        self.m = setting.m
        self.p = setting.p
        nz = np.nonzero(w)[0]
        self.w = w[nz]
        self.Y = Y[:, nz]
        offs = (idx[nz] - k).astype(float)
        self.U = np.vstack([X[:, nz], X[:, nz] * offs])
        self.empty = nz.size == 0
        if link.is_identity and not self.empty:
            Uw = self.U * self.w
            self.S = Uw @ self.U.T
            self.T = (self.Y * self.w) @ self.U.T
            self.c = 0.5 * float(self.w @ np.sum(self.Y**2, axis=0))

    def default_step(self) -> float:
        if self.empty:
            return 1.0
        if self.link.is_identity:
            lmax = float(np.linalg.eigvalsh(self.S)[-1])
            return self.m / max(lmax, 1e-12)
        return 1.0

    def value(self, B: Array) -> float:
        if self.empty:
            return 0.0
        if self.link.is_identity:
            G = B @ self.S
            return (0.5 * np.sum(B * G) - np.sum(B * self.T) + self.c) / self.m
        theta = B @ self.U
        per_j = (
            np.sum(self.link.G_star(self.Y), axis=0)
            + np.sum(self.link.G(theta), axis=0)
            - np.sum(theta * self.Y, axis=0)
        )
        return float(self.w @ per_j) / self.m

    def grad(self, B: Array) -> Array:
        """Unmasked gradient of the data term w.r.t. B (m x 2p)."""
        if self.empty:
            return np.zeros_like(B)
        if self.link.is_identity:
            return (B @ self.S - self.T) / self.m
        theta = B @ self.U
        R = (self.link.g(theta) - self.Y) * self.w
        return (R @ self.U.T) / self.m


def _make_problem(setting, panel, link, weights, k, w_row=None):
    Y, X, idx = design_matrices(setting, panel)
    if w_row is None:
        w = effective_weights(weights, k, idx)
    else:
        w = np.asarray(w_row, dtype=float)[idx]
    return _KProblem(setting, link, k, w, Y, X, idx)


def objective_F(
    A_k: Array,
    Ap_k: Array,
    k: int,
    setting: RegressionSetting,
    panel: TimeSeriesPanel,
    weights: KernelWeights,
    link: LinkSpec = IDENTITY_LINK,
    L_k: Optional[Array] = None,
) -> float:
    """Kernel-weighted sum of offset losses of the locally-linear predictor."""
    prob = _make_problem(setting, panel, link, weights, k)
    eff = A_k if L_k is None else A_k + L_k
    return prob.value(np.hstack([eff, Ap_k]))


def grad_F(
    A_k: Array,
    Ap_k: Array,
    k: int,
    setting: RegressionSetting,
    panel: TimeSeriesPanel,
    weights: KernelWeights,
    link: LinkSpec = IDENTITY_LINK,
    L_k: Optional[Array] = None,
) -> tuple[Array, Array]:
    """Masked gradients (E_k, H_k) of objective_F w.r.t. A_k and Ap_k."""
    prob = _make_problem(setting, panel, link, weights, k)
    eff = A_k if L_k is None else A_k + L_k
    G = prob.grad(np.hstack([eff, Ap_k]))
    p = setting.p
    mask = setting.mask
    return mask * G[:, :p], mask * G[:, p:]


def _fit_k(
    prob: _KProblem,
    penalty: PenaltySpec,
    mask: Array,
    s0: Optional[float],
    t_max: int,
    tol: float,
    k: int,
    init: Optional[tuple[Array, Array, Optional[Array]]] = None,
    debug_monotone: bool = False,
    fit_slope: bool = True,
):
    """Proximal gradient descent on one time point.  Returns (A, Ap, L).

    Works on the stacked variable B = [A  A'] (m x 2p); the optional latent
    block L rides along separately.  The hot path avoids the generic prox
    dispatch with inlined group shrinkage.  With ``fit_slope=False`` the
    derivative block A' is pinned at zero (locally-constant fit), which the
    changepoint detector uses: an unconstrained slope lets a short one-sided
    window interpolate noise and makes its residual incomparable.
    """
    m, p = prob.m, prob.p
    setting = prob.setting
    if init is None:
        A = np.zeros((m, p))
        Ap = np.zeros((m, p))
        L = np.zeros((m, p)) if penalty.lam_star > 0 else None
    else:
        A, Ap, L = init
        A = mask * A
    if prob.empty:
        return A, Ap, L

    granger = penalty.kind == "granger_groups"
    M, N = setting.M, setting.N
    lam, lam_star = penalty.lam, penalty.lam_star

    def pen_val(Amat):
        if lam == 0:
            return 0.0
        if granger:
            G = Amat.reshape(m, M, N)
            return float(np.sqrt((G * G).sum(axis=1)).sum())
        return penalty_value(Amat, setting, penalty.kind)

    def prox_A(Amat, t):
        if t == 0:
            return Amat
        if granger:
            G = Amat.reshape(m, M, N)
            norms = np.sqrt((G * G).sum(axis=1, keepdims=True))
            scale = np.clip(1.0 - t / np.maximum(norms, 1e-300), 0.0, None)
            return (G * scale).reshape(m, p) * mask
        return prox_penalty(Amat, t, setting, penalty.kind) * mask

    def smooth_of(Amat, Apmat, Lmat, buf):
        buf[:, :p] = Amat if Lmat is None else Amat + Lmat
        buf[:, p:] = Apmat
        return prob.value(buf)

    def full_of(Amat, Lmat, f_smooth):
        val = f_smooth + lam * pen_val(Amat)
        if Lmat is not None:
            val += lam_star * nuclear_norm(Lmat)
        return val

    buf = np.empty((m, 2 * p))
    By = np.empty((m, 2 * p))
    s = s0 if s0 is not None else prob.default_step()
    if s <= 0:
        raise ParameterError(f"initial step size must be positive, got {s}")
    f_cur = smooth_of(A, Ap, L, By)
    f0 = full_of(A, L, f_cur)
    floor = max(abs(f0), 1e-12)
    f_prev = f0
    stagnant = 0
    # the flatline threshold tightens with tol so that high-accuracy runs
    # are not stopped by objective stagnation before the parameters settle
    flat_tol = min(1e-12, tol * tol)
    for _ in range(t_max):
        G = prob.grad(By)
        Graw_A = G[:, :p]
        E = mask * Graw_A
        H = mask * G[:, p:]
        for _bt in range(_MAX_BACKTRACKS):
            A_new = prox_A(A - s * E, s * lam)
            Ap_new = Ap - s * H if fit_slope else Ap
            L_new = None
            dA, dAp = A_new - A, Ap_new - Ap
            lin = float((E * dA).sum() + (H * dAp).sum())
            sq = float((dA * dA).sum() + (dAp * dAp).sum())
            if L is not None:
                L_new = prox_nuclear(L - s * Graw_A, s * lam_star)
                dL = L_new - L
                lin += float((Graw_A * dL).sum())
                sq += float((dL * dL).sum())
            f_new = smooth_of(A_new, Ap_new, L_new, buf)
            if f_new <= f_cur + lin + sq / (2 * s) + 1e-12:
                break
            s *= 0.5
        else:
            raise NonconvergenceError(
                f"backtracking failed to find a usable step at k={k}", k=k
            )
        f_full = full_of(A_new, L_new, f_new)
        step_sq = sq
        ref_sq = float((A * A).sum() + (Ap * Ap).sum())
        if L is not None:
            ref_sq += float((L * L).sum())
        A, Ap, L = A_new, Ap_new, L_new
        By, buf = buf, By
        f_cur = f_new
        if not np.isfinite(f_full) or f_full > _DIVERGENCE_FACTOR * floor:
            raise NonconvergenceError(
                f"objective diverged at k={k} ({f_full:.3e} vs initial {f0:.3e})",
                k=k,
            )
        if debug_monotone and f_full > f_prev + 1e-9 * max(1.0, abs(f_prev)):
            raise NonconvergenceError(
                f"objective increased at k={k}: {f_prev} -> {f_full}", k=k
            )
        # secondary stop: the objective has flatlined even though parameters
        # still drift along near-null directions of the weighted Gram
        if abs(f_prev - f_full) <= flat_tol * max(1.0, abs(f_prev)):
            stagnant += 1
        else:
            stagnant = 0
        f_prev = f_full
        if step_sq <= tol * tol * max(ref_sq, 1.0) or stagnant >= 5:
            break
    return A, Ap, L


def fit_at(
    k: int,
    panel: TimeSeriesPanel,
    setting: RegressionSetting,
    penalty: PenaltySpec,
    weights: KernelWeights,
    link: LinkSpec = IDENTITY_LINK,
    w_row: Optional[Array] = None,
    s0: Optional[float] = None,
    t_max: int = 2000,
    tol: float = 1e-5,
    debug_monotone: bool = False,
    fit_slope: bool = True,
):
    """Fit the local model at one time point; ``w_row`` overrides the kernel
    row (used for segment-truncated boundary refits)."""
    prob = _make_problem(setting, panel, link, weights, k, w_row=w_row)
    return _fit_k(
        prob, penalty, setting.mask, s0, t_max, tol, k,
        debug_monotone=debug_monotone, fit_slope=fit_slope,
    )


def fit_tv_graphs(
    panel: TimeSeriesPanel,
    setting: RegressionSetting,
    penalty: PenaltySpec,
    weights: KernelWeights,
    link: LinkSpec = IDENTITY_LINK,
    s0: Optional[float] = None,
    t_max: int = 2000,
    tol: float = 1e-5,
    workers: int = 1,
    ks: Optional[list[int]] = None,
    debug_monotone: bool = False,
    fit_slope: bool = True,
) -> GraphSequence:
    """Estimate the full graph sequence, independently per time point."""
    if panel.K <= setting.first_valid:
        raise ParameterError(
            f"panel too short: K={panel.K} with first valid index "
            f"{setting.first_valid}"
        )
    if weights.K != panel.K:
        raise ConfigurationError(
            f"kernel built for K={weights.K} but panel has K={panel.K}"
        )
    K, m, p = panel.K, setting.m, setting.p
    mask = setting.mask
    Y, X, idx = design_matrices(setting, panel)
    if ks is None:
        ks = list(range(setting.first_valid, K))

    def solve(k):
        w = effective_weights(weights, k, idx)
        prob = _KProblem(setting, link, k, w, Y, X, idx)
        return _fit_k(
            prob, penalty, mask, s0, t_max, tol, k,
            debug_monotone=debug_monotone, fit_slope=fit_slope,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, ks))
    else:
        results = [solve(k) for k in ks]

    Acal = np.zeros((K, m * p))
    Aprime = np.zeros((K, m * p))
    Lcal = np.zeros((K, m * p)) if penalty.lam_star > 0 else None
    for k, (A, Ap, L) in zip(ks, results):
        Acal[k] = A.reshape(-1)
        Aprime[k] = Ap.reshape(-1)
        if Lcal is not None:
            Lcal[k] = L.reshape(-1)
    return GraphSequence(
        Acal=Acal,
        Aprime=Aprime,
        setting=setting,
        Lcal=Lcal,
        side=weights.side,
        valid_start=setting.first_valid,
    )

"""Factorize a graph sequence into sparse basis networks and time weights.

Solves

    min_{C, B}  0.5 ||Ahat - C B'||_F^2
                + lam_star * 0.5 (||C||_F^2 + ||B||_F^2)
                + lam_1 * h_1(B)

by inertial proximal alternating linearized minimization with adaptive
steps from the block Lipschitz bounds ||C||_F^2 + lam_star and
||B||_F^2 + lam_star.  Column r of B reshapes to one m x p basis network;
row k of C holds the R combination weights at time k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError
from .glm import Mode, RegressionSetting
from .prox import penalty_value, prox_penalty

Array = np.ndarray

_STEP_FLOOR = 1e-8  # Lipschitz bounds vanish at a zero factor with lam_star=0


@dataclass
class IpalmConfig:
    t_max: int = 5000
    tol: float = 1e-6
    init: str = "svd"  # or "random"
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ParameterError(f"tolerance must be positive, got {self.tol}")
        if self.t_max < 1:
            raise ParameterError(f"t_max must be >= 1, got {self.t_max}")
        if self.init not in ("svd", "random"):
            raise ParameterError(f"unknown init {self.init!r}")


@dataclass
class Factorization:
    C: Array  # K x R time weights
    Bcal: Array  # (m*p) x R vectorized basis networks
    setting: RegressionSetting
    lam_star: float = 0.0
    lam_1: float = 0.0
    history: list = field(default_factory=list)

    @property
    def R(self) -> int:
        return self.C.shape[1]

    def network(self, r: int) -> Array:
        return self.Bcal[:, r].reshape(self.setting.m, self.setting.p)

    def reconstruction(self) -> Array:
        return self.C @ self.Bcal.T


def _check_shapes(C, Bcal, Ahat):
    K, R = C.shape
    mp, R2 = Bcal.shape
    if R != R2:
        raise ShapeError(f"rank mismatch: C has R={R}, Bcal has R={R2}")
    if Ahat.shape != (K, mp):
        raise ShapeError(
            f"data shape {Ahat.shape} incompatible with factors "
            f"({K}, {mp})"
        )


def _sparsity_term(Bcal: Array, setting: RegressionSetting) -> float:
    kind = (
        "granger_groups"
        if setting.mode is Mode.DIRECTED_AR
        else "symmetric_pairs"
    )
    return sum(
        penalty_value(
            Bcal[:, r].reshape(setting.m, setting.p), setting, kind
        )
        for r in range(Bcal.shape[1])
    )


def mf_objective(
    C: Array,
    Bcal: Array,
    Ahat: Array,
    lam_star: float,
    lam_1: float,
    setting: RegressionSetting,
) -> float:
    """Full nonconvex factorization objective."""
    _check_shapes(C, Bcal, Ahat)
    fit = 0.5 * np.sum((Ahat - C @ Bcal.T) ** 2)
    ridge = 0.5 * lam_star * (np.sum(C**2) + np.sum(Bcal**2))
    return float(fit + ridge + lam_1 * _sparsity_term(Bcal, setting))


def mf_gradients(
    C: Array, Bcal: Array, Ahat: Array, lam_star: float
) -> tuple[Array, Array]:
    """Exact gradients of the smooth part w.r.t. (Bcal, C)."""
    _check_shapes(C, Bcal, Ahat)
    Q = C @ Bcal.T - Ahat
    dB = Q.T @ C + lam_star * Bcal
    dC = Q @ Bcal + lam_star * C
    return dB, dC


def lipschitz_bounds(
    C: Array, Bcal: Array, lam_star: float
) -> tuple[float, float]:
    """(bound for the B block given C, bound for the C block given B)."""
    Lb = float(np.sum(C**2)) + lam_star
    Lc = float(np.sum(Bcal**2)) + lam_star
    return Lb, Lc


def prox_B(Bcal: Array, t: float, setting: RegressionSetting) -> Array:
    """Group soft threshold per basis-network column, masked by the setting."""
    if t < 0:
        raise ParameterError(f"prox threshold must be nonnegative, got {t}")
    kind = (
        "granger_groups"
        if setting.mode is Mode.DIRECTED_AR
        else "symmetric_pairs"
    )
    mask = setting.mask.reshape(-1)
    out = np.empty_like(np.asarray(Bcal, dtype=float))
    for r in range(Bcal.shape[1]):
        col = Bcal[:, r].reshape(setting.m, setting.p)
        out[:, r] = prox_penalty(col, t, setting, kind).reshape(-1)
    return out * mask[:, None]


def _init_factors(Ahat, R, setting, config):
    mask = setting.mask.reshape(-1)
    if config.init == "svd":
        U, s, Vt = np.linalg.svd(Ahat, full_matrices=False)
        root = np.sqrt(s[:R])
        C = U[:, :R] * root
        Bcal = (Vt[:R].T * root) * mask[:, None]
    else:
        rng = np.random.default_rng(config.seed)
        C = rng.standard_normal((Ahat.shape[0], R))
        Bcal = rng.standard_normal((Ahat.shape[1], R)) * mask[:, None]
    return C, Bcal


def ipalm_factorize(
    Ahat: Array,
    setting: RegressionSetting,
    R: int,
    lam_star: float = 0.0,
    lam_1: float = 0.0,
    config: Optional[IpalmConfig] = None,
) -> Factorization:
    """Run the inertial alternating solver on the stacked graph sequence."""
    config = config or IpalmConfig()
    Ahat = np.asarray(Ahat, dtype=float)
    if not np.isfinite(Ahat).all():
        raise ParameterError("input sequence has non-finite entries")
    K, mp = Ahat.shape
    if R < 1 or R > min(K, mp):
        raise ParameterError(
            f"rank R={R} outside valid range [1, {min(K, mp)}]"
        )
    C, Bcal = _init_factors(Ahat, R, setting, config)
    C_prev, B_prev = C.copy(), Bcal.copy()
    history = [mf_objective(C, Bcal, Ahat, lam_star, lam_1, setting)]

    for t in range(config.t_max):
        zeta = t / (t + 3.0)

        Yb = Bcal + zeta * (Bcal - B_prev)
        Qb = C @ Yb.T - Ahat
        Gb = Qb.T @ C + lam_star * Yb
        Lb = max(float(np.sum(C**2)) + lam_star, _STEP_FLOOR)
        B_next = prox_B(Yb - Gb / Lb, lam_1 / Lb, setting)

        Zc = C + zeta * (C - C_prev)
        Qc = Zc @ B_next.T - Ahat
        Gc = Qc @ B_next + lam_star * Zc
        Lc = max(float(np.sum(B_next**2)) + lam_star, _STEP_FLOOR)
        C_next = Zc - Gc / Lc  # prox of the C block is the identity

        obj = mf_objective(C_next, B_next, Ahat, lam_star, lam_1, setting)
        if not np.isfinite(obj):
            raise DivergenceError(
                f"factorization objective became non-finite at iteration {t}"
            )
        history.append(obj)

        num = np.sqrt(
            np.sum((B_next - Bcal) ** 2) + np.sum((C_next - C) ** 2)
        )
        den = np.sqrt(np.sum(Bcal**2) + np.sum(C**2))
        B_prev, C_prev = Bcal, C
        Bcal, C = B_next, C_next
        if num <= config.tol * max(den, 1e-12):
            break

    return Factorization(
        C=C,
        Bcal=Bcal,
        setting=setting,
        lam_star=lam_star,
        lam_1=lam_1,
        history=history,
    )


def _column_correlations(U: Array, V: Array) -> Array:
    """Absolute-correlation-friendly normalized inner products, R x R."""
    Un = U / np.maximum(np.linalg.norm(U, axis=0, keepdims=True), 1e-300)
    Vn = V / np.maximum(np.linalg.norm(V, axis=0, keepdims=True), 1e-300)
    return Un.T @ Vn


def align_factors(
    est: Factorization, ref: Factorization
) -> tuple[list[int], list[int], list[float]]:
    """Match estimated basis networks to the reference ones.

    Greedy maximum-|correlation| assignment of est columns to ref columns;
    per match, the sign of the correlation and the least-squares scale
    mapping the est column onto the ref column.  Returns (perm, signs,
    scales) with perm[r] = index of the est column matched to ref column r.
    """
    if est.R != ref.R:
        raise ParameterError(f"rank mismatch: est R={est.R}, ref R={ref.R}")
    R = est.R
    corr = _column_correlations(est.Bcal, ref.Bcal)  # corr[i, j]: est i, ref j
    perm = [-1] * R
    signs = [1] * R
    scales = [1.0] * R
    cost = np.abs(corr).copy()
    for _ in range(R):
        i, j = np.unravel_index(np.argmax(cost), cost.shape)
        perm[j] = int(i)
        signs[j] = 1 if corr[i, j] >= 0 else -1
        e = est.Bcal[:, i]
        denom = float(e @ e)
        scales[j] = abs(float(e @ ref.Bcal[:, j]) / denom) if denom > 0 else 1.0
        cost[i, :] = -np.inf
        cost[:, j] = -np.inf
    return perm, signs, scales


def apply_alignment(
    est: Factorization, perm: list[int], signs: list[int], scales: list[float]
) -> Factorization:
    """Permuted/sign-fixed/rescaled copy; the reconstruction is unchanged."""
    factors = np.array(signs, dtype=float) * np.array(scales, dtype=float)
    Bcal = est.Bcal[:, perm] * factors
    C = est.C[:, perm] / factors
    return Factorization(
        C=C,
        Bcal=Bcal,
        setting=est.setting,
        lam_star=est.lam_star,
        lam_1=est.lam_1,
        history=list(est.history),
    )


def brute_force_alignment_score(est: Factorization, ref: Factorization) -> float:
    """Best total matched |correlation| over all permutations (test oracle)."""
    corr = np.abs(_column_correlations(est.Bcal, ref.Bcal))
    R = est.R
    return max(
        sum(corr[p[j], j] for j in range(R)) for p in permutations(range(R))
    )


def scree_profile(Ahat: Array) -> Array:
    """Singular-value profile of the stacked sequence, for rank selection."""
    return np.linalg.svd(np.asarray(Ahat, dtype=float), compute_uv=False)

"""Metrics against ground truth: edge-detection ROC, changepoint
localization error, and per-time trajectory error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .glm import Mode, RegressionSetting
from .tvgraph import GraphSequence

Array = np.ndarray


@dataclass(frozen=True)
class EdgeRocPoint:
    threshold: float
    p_fa: float
    p_d: float


def _group_magnitudes(network: Array, setting: RegressionSetting):
    """Per-edge magnitudes over masked positions; AR lag blocks collapse to
    one group per (i, j) via the group 2-norm."""
    if network.shape != (setting.m, setting.p):
        raise ShapeError(
            f"network shape {network.shape} != ({setting.m}, {setting.p})"
        )
    if setting.mode is Mode.DIRECTED_AR:
        G = network.reshape(setting.m, setting.M, setting.N)
        mags = np.linalg.norm(G, axis=1)
        gmask = setting.mask.reshape(setting.m, setting.M, setting.N).max(axis=1)
        return mags[gmask > 0]
    return network[setting.mask > 0]


def default_thresholds(est_network: Array, n: int = 100) -> Array:
    """Log-spaced grid spanning [1e-4, max |est|]."""
    top = float(np.abs(est_network).max())
    if top <= 1e-4:
        return np.array([1e-4])
    return np.geomspace(1e-4, top, n)


def edge_roc(
    est_network: Array,
    true_network: Array,
    setting: RegressionSetting,
    thresholds: Optional[Sequence[float]] = None,
) -> list[EdgeRocPoint]:
    """Thresholded edge detection rates against the true support.

    p_fa = fraction of truly-absent edges with estimated magnitude above the
    threshold; p_d = fraction of true edges detected.
    """
    est = np.abs(_group_magnitudes(est_network, setting))
    true = np.abs(_group_magnitudes(true_network, setting))
    support = true > 0
    n_pos = int(support.sum())
    n_neg = int((~support).sum())
    if n_pos == 0:
        raise ParameterError(
            "true network has no edges; detection probability undefined"
        )
    if thresholds is None:
        thresholds = default_thresholds(est_network)
    points = []
    for t in thresholds:
        hits = est > t
        p_d = float(np.count_nonzero(hits & support)) / n_pos
        p_fa = (
            float(np.count_nonzero(hits & ~support)) / n_neg if n_neg else 0.0
        )
        points.append(EdgeRocPoint(threshold=float(t), p_fa=p_fa, p_d=p_d))
    return points


def roc_dominates(
    points: list[EdgeRocPoint], p_fa_max: float, p_d_min: float
) -> bool:
    """True when some operating point achieves both rate targets."""
    return any(p.p_fa <= p_fa_max and p.p_d >= p_d_min for p in points)


def changepoint_error(
    detected: Sequence[int], truth: Sequence[int], window: int
) -> tuple[int, int, list[int]]:
    """Greedy nearest matching of detections to true changepoints.

    Returns (misses, false_alarms, signed offsets of the matches); a pair
    only matches within ``window`` steps.
    """
    detected = sorted(detected)
    truth = sorted(truth)
    pairs = sorted(
        ((abs(d - t), di, ti) for di, d in enumerate(detected)
         for ti, t in enumerate(truth)),
    )
    used_d, used_t = set(), set()
    offsets = []
    for dist, di, ti in pairs:
        if dist > window or di in used_d or ti in used_t:
            continue
        used_d.add(di)
        used_t.add(ti)
        offsets.append(detected[di] - truth[ti])
    misses = len(truth) - len(used_t)
    false_alarms = len(detected) - len(used_d)
    return misses, false_alarms, offsets


@dataclass
class TrajectoryError:
    per_k: Array  # Frobenius error per time point (nan before valid_start)
    aggregate: float  # mean over defined time points
    per_edge: Array  # K x (m*p) signed errors for plotting


def trajectory_error(est: GraphSequence, true_Acal: Array) -> TrajectoryError:
    """Frobenius error of the estimated graph sequence per time point."""
    if est.Acal.shape != true_Acal.shape:
        raise ShapeError(
            f"sequence shapes differ: {est.Acal.shape} vs {true_Acal.shape}"
        )
    diff = est.Acal - true_Acal
    per_k = np.linalg.norm(diff, axis=1)
    per_k[: est.valid_start] = np.nan
    aggregate = float(np.nanmean(per_k)) if len(per_k) > est.valid_start else 0.0
    return TrajectoryError(per_k=per_k, aggregate=aggregate, per_edge=diff)

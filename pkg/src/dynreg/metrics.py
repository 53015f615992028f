"""Registration metrics and forward-only loss values."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, UndefinedMetricError
from .geometry import RigidTransform


@dataclass(frozen=True)
class MetricConfig:
    rmse_threshold: float = 0.2
    rre_threshold: float = 5.0
    rte_threshold: float = 2.0

    def __post_init__(self):
        if min(self.rmse_threshold, self.rre_threshold, self.rte_threshold) <= 0:
            raise ConfigError("metric thresholds must be positive")


@dataclass(frozen=True)
class LossConfig:
    positive_margin: float = 1.4
    negative_margin: float = 0.1
    overlap_floor: float = 0.1
    loss_weight: float = 1.0
    gt_samples: int = 128
    matching_radius: float = 0.05

    def __post_init__(self):
        if not self.positive_margin > self.negative_margin > 0:
            raise ConfigError("margins must satisfy positive > negative > 0")


def rte(est: RigidTransform, gt: RigidTransform) -> float:
    return float(np.linalg.norm(est.translation - gt.translation))


def rre(est: RigidTransform, gt: RigidTransform) -> float:
    """Angle of R_est^T R_gt in degrees: arccos((tr - 1) / 2), evaluated as atan2(sin, cos).

    arccos alone loses about 1e-6 degrees near the identity to the rounding of
    its argument; the atan2 form keeps full precision and never returns nan.
    """
    R = est.rotation.T @ gt.rotation
    c = (np.trace(R) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.degrees(np.arctan2(s, c)))


def rmse(src_points, tgt_points, est: RigidTransform) -> float:
    """Root-mean-square residual of ground-truth pairs (p_i, q_i) under ``est``."""
    p = np.asarray(src_points, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(tgt_points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise UndefinedMetricError("RMSE of an empty correspondence set")
    if len(p) != len(q):
        raise UndefinedMetricError("correspondence arrays differ in length")
    return float(np.sqrt(np.mean(np.sum((est.apply(p) - q) ** 2, axis=1))))


def passes(row: Mapping, cfg: MetricConfig, mode: str) -> bool:
    if mode == "rmse-based":
        return row["rmse"] < cfg.rmse_threshold
    if mode == "pose-based":
        return row["rre"] < cfg.rre_threshold and row["rte"] < cfg.rte_threshold
    raise ConfigError(f"unknown recall mode {mode!r}")


def registration_recall(results: Sequence[Mapping], cfg: MetricConfig = MetricConfig(), mode: str = "rmse-based") -> float:
    """Fraction of pairs meeting the strict threshold criterion of ``mode``."""
    if len(results) == 0:
        raise UndefinedMetricError("registration recall of an empty result list")
    return sum(passes(r, cfg, mode) for r in results) / len(results)


def circle_loss(anchors: Iterable[Mapping], cfg: LossConfig = LossConfig()) -> float:
    """Overlap-aware circle loss over anchor patches (forward value only).

    Each anchor is a mapping with ``pos_dist`` and ``pos_overlap`` (feature
    distances and overlap ratios of its positive patches) and ``neg_dist``.
    Positives below the overlap floor are ignored. The weights are
    beta_p = max(0, d - margin_p) and beta_n = max(0, margin_n - d).
    """
    anchors = list(anchors)
    if not anchors:
        return 0.0
    total = 0.0
    for a in anchors:
        dp = np.asarray(a.get("pos_dist", ()), dtype=np.float64)
        op = np.asarray(a.get("pos_overlap", np.ones_like(dp)), dtype=np.float64)
        dn = np.asarray(a.get("neg_dist", ()), dtype=np.float64)
        keep = op >= cfg.overlap_floor
        dp, op = dp[keep], op[keep]
        beta_p = np.maximum(dp - cfg.positive_margin, 0.0)
        beta_n = np.maximum(cfg.negative_margin - dn, 0.0)
        log_pos = np.sqrt(op) * beta_p * (dp - cfg.positive_margin)
        log_neg = beta_n * (cfg.negative_margin - dn)
        if dp.size == 0 or dn.size == 0:
            continue  # empty sum: log(1 + 0)
        lse = _lse(log_pos) + _lse(log_neg)
        total += np.logaddexp(0.0, lse)
    return float(total / len(anchors))


def _lse(x):
    m = np.max(x)
    return m + math.log(np.sum(np.exp(x - m)))


def point_matching_loss(assignments: Sequence[np.ndarray], matched: Sequence, unmatched_src: Sequence,
                        unmatched_tgt: Sequence, floor: float = 1e-12) -> float:
    """Mean negative log-likelihood of ground-truth entries in dustbin-augmented assignments.

    ``assignments[i]`` is (m_i+1, n_i+1) with the dustbin as last row/column.
    Entries below ``floor`` are clamped and a RuntimeWarning is raised.
    """
    if len(assignments) == 0:
        return 0.0
    clamped = False
    losses = []
    for C, M, I, J in zip(assignments, matched, unmatched_src, unmatched_tgt):
        C = np.asarray(C, dtype=np.float64)
        m, n = C.shape[0] - 1, C.shape[1] - 1
        vals = [C[x, y] for x, y in M] + [C[x, n] for x in I] + [C[m, y] for y in J]
        vals = np.asarray(vals, dtype=np.float64)
        if np.any(vals < floor):
            clamped = True
        losses.append(-np.sum(np.log(np.maximum(vals, floor))))
    if clamped:
        warnings.warn("assignment probability below floor was clamped", RuntimeWarning, stacklevel=2)
    return float(np.mean(losses))

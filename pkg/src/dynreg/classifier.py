"""Spatial-consistency scoring and the early-exit decision."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigError, ContractError, InputError
from .matching import CorrespondenceSet

EXIT_SUCCESS = "exit-success"
CONTINUE = "continue"
EXIT_DEGRADED = "exit-degraded"
SCORERS = ("sc", "sc2", "ir")


@dataclass(frozen=True)
class ClassifierConfig:
    sigma_d: float = 0.1
    global_threshold: float = 200.0
    local_thresholds: Optional[List[float]] = field(default=None)
    local_start_fraction: float = 0.1
    local_step: float = 10.0
    compare_deltas: bool = True  # False: compare raw local scores against the thresholds
    enabled: bool = True
    scorer: str = "sc"

    def __post_init__(self):
        if not self.sigma_d > 0:
            raise ConfigError("sigma_d must be positive")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}")

    def local_threshold(self, i: int) -> float:
        """Threshold for local stage ``i`` (1-based); the schedule clamps to its last entry."""
        if i < 1:
            raise ContractError("local stages are numbered from 1")
        if self.local_thresholds:
            return float(self.local_thresholds[min(i, len(self.local_thresholds)) - 1])
        return self.local_start_fraction * self.global_threshold + (i - 1) * self.local_step


def sc_matrix(corr: CorrespondenceSet, src, tgt, sigma_d: float) -> np.ndarray:
    """Pairwise consistency max(0, 1 - d_ij^2 / sigma_d^2), d_ij the difference of intra-cloud lengths."""
    if len(corr) < 2:
        raise InputError(f"spatial consistency needs >= 2 correspondences, got {len(corr)}")
    x = np.asarray(getattr(src, "points", src))[corr.src]
    y = np.asarray(getattr(tgt, "points", tgt))[corr.tgt]
    return sc_matrix_from_points(x, y, sigma_d)


def _pairwise(p):
    return np.sqrt(np.maximum(np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1), 0.0))


def sc_matrix_from_points(x, y, sigma_d: float) -> np.ndarray:
    d = np.abs(_pairwise(x) - _pairwise(y))
    sc = np.maximum(1.0 - d**2 / sigma_d**2, 0.0)
    sc = 0.5 * (sc + sc.T)
    np.fill_diagonal(sc, 1.0)
    return sc


def sc_score(matrix) -> float:
    """Largest row sum: the total consistency of the best-supported correspondence."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        return 0.0
    return float(m.sum(axis=1).max())


def sc2_score(matrix) -> float:
    """Second-order variant: (SC . SC) masked by first-order consistency, max row sum."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        return 0.0
    hard = (m > 0).astype(np.float64)
    second = (hard @ hard) * hard
    return float(second.sum(axis=1).max() / max(len(m), 1))


def stage_score(corr: CorrespondenceSet, src, tgt, cfg: ClassifierConfig, total: Optional[int] = None) -> float:
    """Scalar quality of a stage's surviving correspondences under the configured scorer."""
    if cfg.scorer == "ir":
        denom = total if total else len(corr)
        return float(len(corr)) / denom * 100.0 if denom else 0.0
    if len(corr) < 2:
        return float(len(corr))
    m = sc_matrix(corr, src, tgt, cfg.sigma_d)
    return sc2_score(m) if cfg.scorer == "sc2" else sc_score(m)


def decide(stage: int, current_score: float, previous_score: Optional[float], cfg: ClassifierConfig) -> str:
    """Early-exit decision after a stage; stage 0 is global, i >= 1 the i-th local stage."""
    if stage == 0:
        return EXIT_SUCCESS if current_score >= cfg.global_threshold else CONTINUE
    if previous_score is None:
        raise ContractError("local stage decision needs the previous score")
    threshold = cfg.local_threshold(stage)
    value = current_score - previous_score if cfg.compare_deltas else current_score
    return EXIT_DEGRADED if value < threshold else CONTINUE

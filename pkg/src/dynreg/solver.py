"""Weighted rigid fitting and local-to-global transform selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, InputError, RegistrationFailure
from .geometry import RigidTransform
from .matching import CorrespondenceSet


@dataclass(frozen=True)
class SolverConfig:
    acceptance_threshold: float = 0.1
    refinement_rounds: int = 5

    def __post_init__(self):
        if not self.acceptance_threshold > 0:
            raise ConfigError("acceptance_threshold must be positive")
        if self.refinement_rounds < 1:
            raise ConfigError("refinement_rounds must be >= 1")


def weighted_kabsch(src, tgt, weights=None) -> RigidTransform:
    """Closed-form minimizer of sum_i w_i |R x_i + t - y_i|^2 over rigid (R, t)."""
    x = np.asarray(src, dtype=np.float64)
    y = np.asarray(tgt, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise InputError(f"point arrays must share shape (N, 3), got {x.shape} and {y.shape}")
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != len(x):
        raise InputError("weights length differs from points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("weights must be finite and non-negative")
    active = w > 0
    if active.sum() < 3 or w.sum() <= 0:
        raise DegenerateGeometryError(f"need >= 3 positively weighted pairs, got {int(active.sum())}")
    x, y, w = x[active], y[active], w[active]
    w = w / w.sum()
    cx = w @ x
    cy = w @ y
    xc = x - cx
    yc = y - cy
    # rank check on the source spread: collinear sets leave a free rotation axis
    s = np.linalg.svd(xc * np.sqrt(w)[:, None], compute_uv=False)
    if s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateGeometryError("correspondences are collinear or coincident")
    H = (xc * w[:, None]).T @ yc
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    t = cy - R @ cx
    return RigidTransform(R, t)


def residuals(T: RigidTransform, src_points, tgt_points) -> np.ndarray:
    return np.linalg.norm(T.apply(src_points) - tgt_points, axis=1)


def inlier_mask(T: RigidTransform, corr: CorrespondenceSet, src_points, tgt_points, tau: float) -> np.ndarray:
    if len(corr) == 0:
        return np.zeros(0, dtype=bool)
    return residuals(T, src_points[corr.src], tgt_points[corr.tgt]) < tau


def count_inliers(T: RigidTransform, corr: CorrespondenceSet, src, tgt, tau: float) -> int:
    """Pairs whose residual |R x + t - y| is strictly below ``tau``."""
    sp = getattr(src, "points", src)
    tp = getattr(tgt, "points", tgt)
    return int(inlier_mask(T, corr, np.asarray(sp), np.asarray(tp), tau).sum())


@dataclass
class LGRResult:
    transform: RigidTransform
    inliers: CorrespondenceSet
    selected_patch: int
    candidate_inliers: List[int] = field(default_factory=list)
    round_inliers: List[int] = field(default_factory=list)


def patch_candidates(src_points, tgt_points, patch_corrs: Sequence[CorrespondenceSet]):
    """Per-patch weighted fits; degenerate patches yield None."""
    out = []
    for pc in patch_corrs:
        if len(pc) < 3:
            out.append(None)
            continue
        try:
            out.append(weighted_kabsch(src_points[pc.src], tgt_points[pc.tgt], pc.weights))
        except DegenerateGeometryError:
            out.append(None)
    return out


def local_to_global(src_points, tgt_points, patch_corrs: Sequence[CorrespondenceSet],
                    all_corrs: CorrespondenceSet, config: SolverConfig = SolverConfig()) -> LGRResult:
    """Fit one transform per patch, keep the one with the most inliers, then refit.

    Inliers are counted over ``all_corrs``. A refit round is accepted only if
    it does not lose inliers, so the count never decreases across rounds.
    """
    src_points = getattr(src_points, "points", src_points)
    tgt_points = getattr(tgt_points, "points", tgt_points)
    tau = config.acceptance_threshold
    candidates = patch_candidates(src_points, tgt_points, patch_corrs)
    counts = [-1 if T is None else int(inlier_mask(T, all_corrs, src_points, tgt_points, tau).sum())
              for T in candidates]
    if not counts or max(counts) < 0:
        raise RegistrationFailure("no patch produced a usable transform",
                                  diagnostics={"patches": len(patch_corrs),
                                               "patch_sizes": [len(p) for p in patch_corrs]})
    best = int(np.argmax(counts))  # first maximum = lowest patch index
    T = candidates[best]
    mask = inlier_mask(T, all_corrs, src_points, tgt_points, tau)
    history = [int(mask.sum())]
    for _ in range(config.refinement_rounds):
        if mask.sum() < 3:
            break
        sub = all_corrs.subset(mask)
        try:
            T_new = weighted_kabsch(src_points[sub.src], tgt_points[sub.tgt], sub.weights)
        except DegenerateGeometryError:
            break
        new_mask = inlier_mask(T_new, all_corrs, src_points, tgt_points, tau)
        if new_mask.sum() < mask.sum():
            break
        converged = np.array_equal(new_mask, mask)
        T, mask = T_new, new_mask
        history.append(int(mask.sum()))
        if converged:
            break
    return LGRResult(T, all_corrs.subset(mask), best, counts, history)

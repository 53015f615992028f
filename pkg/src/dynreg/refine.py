"""Refined nodes: similarity-weighted adaptive DBSCAN, centroids, neighbourhood augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, InputError, RefineFailure
from .geometry import PointCloud, SamplingPyramid

NODE_STRATEGIES = ("dbscan", "random", "average-center")
NOISE = -1


@dataclass(frozen=True)
class ClusterConfig:
    eps: float = 0.125
    min_pts: int = 3
    eps_growth: float = 1.1
    min_pts_step: int = 1
    similarity_floor: Optional[float] = None  # None: 25th percentile of the weights
    weighted_distance: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.min_pts < 2:
            raise ConfigError("min_pts must be >= 2")
        if not self.eps_growth > 1:
            raise ConfigError("eps_growth must exceed 1")
        if self.similarity_floor is not None and not 0 <= self.similarity_floor < 1:
            raise ConfigError("similarity_floor must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray
    cluster_count: int
    final_eps: float
    final_min_pts: int
    rounds: int = 0
    kept: Optional[np.ndarray] = None  # mask of points that passed the similarity floor

    @property
    def empty(self) -> bool:
        return self.cluster_count == 0


@dataclass(frozen=True)
class RefineConfig:
    node_budget: Optional[int] = None  # None: match the global stage's node count
    search_level: int = 2
    strategy: str = "dbscan"
    seed: int = 0

    def __post_init__(self):
        if self.node_budget is not None and self.node_budget < 1:
            raise ConfigError("node_budget must be >= 1")
        if self.strategy not in NODE_STRATEGIES:
            raise ConfigError(f"unknown node strategy {self.strategy!r}")


def weighted_distances(points, weights=None) -> np.ndarray:
    """Pairwise distance scaled by 2 / (w_i + w_j + 1e-6); plain Euclidean when weights is None."""
    p = np.asarray(points, dtype=np.float64)
    d = np.sqrt(np.maximum(np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1), 0.0))
    if weights is None:
        return d
    w = np.asarray(weights, dtype=np.float64)
    return d * 2.0 / (w[:, None] + w[None, :] + 1e-6)


def dbscan(dist: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN on a precomputed distance matrix.

    Points are visited in ascending index order; a neighbourhood includes the
    point itself and every point at distance <= eps.
    """
    n = len(dist)
    adj = dist <= eps
    core = adj.sum(axis=1) >= min_pts
    undefined = -2
    labels = np.full(n, undefined, dtype=np.int64)
    cluster = 0
    for p in range(n):
        if labels[p] != undefined:
            continue
        if not core[p]:
            labels[p] = NOISE
            continue
        labels[p] = cluster
        frontier = np.array([p])
        while frontier.size:
            reach = adj[frontier].any(axis=0) & (labels < 0)
            labels[reach] = cluster
            frontier = np.flatnonzero(reach & core)
        cluster += 1
    return labels


def adaptive_dbscan(points, weights, config: ClusterConfig = ClusterConfig()) -> ClusterResult:
    """DBSCAN re-run with a growing radius and density threshold while the cluster count grows.

    Returns the labelling of the last run (the one whose count stopped
    growing) together with the radius and threshold it used. Points below the
    similarity floor are labelled noise.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(pts) != len(w):
        raise InputError("points and weights differ in length")
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterResult(labels, 0, config.eps, config.min_pts, 0, np.zeros(0, bool))
    floor = np.percentile(w, 25) if config.similarity_floor is None else config.similarity_floor
    kept = w >= floor
    if not kept.any():
        return ClusterResult(labels, 0, config.eps, config.min_pts, 0, kept)
    D = weighted_distances(pts[kept], w[kept] if config.weighted_distance else None)
    eps, min_pts = config.eps, config.min_pts
    best = 0
    rounds = 0
    while True:
        sub = dbscan(D, eps, min_pts)
        rounds += 1
        m = int(sub.max(initial=-1) + 1)
        if m > best and rounds <= n:
            best = m
            eps *= config.eps_growth
            min_pts += config.min_pts_step
        else:
            break
    labels[kept] = sub
    return ClusterResult(labels, m, eps, min_pts, rounds, kept)


def cluster_centroids(points, result: ClusterResult) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if result.cluster_count == 0:
        return np.empty((0, 3))
    lab = result.labels
    ok = lab >= 0
    sums = np.zeros((result.cluster_count, 3))
    np.add.at(sums, lab[ok], pts[ok])
    counts = np.bincount(lab[ok], minlength=result.cluster_count)
    return sums / np.maximum(counts, 1)[:, None]


def min_center_distance(candidates, centers) -> np.ndarray:
    c = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    z = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    out = np.full(len(c), np.inf)
    for start in range(0, len(z), 256):
        d = np.linalg.norm(c[:, None, :] - z[None, start:start + 256, :], axis=-1)
        out = np.minimum(out, d.min(axis=1))
    return out


def neighborhood_augmentation(candidates, centers, budget: int) -> np.ndarray:
    """Indices of the ``budget`` candidates closest to any center, nearest first.

    Equal distances are resolved by lower index.
    """
    pts = getattr(candidates, "points", candidates)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise InputError("empty candidate pool")
    if budget < 1:
        raise InputError("budget must be >= 1")
    if len(np.asarray(centers).reshape(-1, 3)) == 0:
        raise InputError("no centers to augment around")
    score = min_center_distance(pts, centers)
    order = np.lexsort((np.arange(len(pts)), score))
    return order[: min(budget, len(pts))]


def _side_centers(points, weights, cfg: ClusterConfig, strategy: str) -> np.ndarray:
    if strategy == "average-center":
        floor = np.percentile(weights, 25) if cfg.similarity_floor is None else cfg.similarity_floor
        keep = weights >= floor
        if not keep.any():
            raise RefineFailure("no matched point above the similarity floor")
        return points[keep].mean(axis=0, keepdims=True)
    result = adaptive_dbscan(points, weights, cfg)
    if result.empty:
        raise RefineFailure("clustering produced no clusters")
    return cluster_centroids(points, result)


@dataclass
class RefinedNodes:
    src: PointCloud
    tgt: PointCloud
    src_index: np.ndarray  # indices into each side's search level
    tgt_index: np.ndarray
    src_centers: np.ndarray
    tgt_centers: np.ndarray


def refined_nodes(matched_src, matched_tgt, weights, src_pyramid: SamplingPyramid, tgt_pyramid: SamplingPyramid,
                  cfg: ClusterConfig, rcfg: RefineConfig = RefineConfig(),
                  budget: Optional[Tuple[int, int]] = None) -> RefinedNodes:
    """New coarse nodes for both clouds from the matched points of the last stage.

    ``budget`` gives the node count per side; it defaults to
    ``rcfg.node_budget`` and otherwise to each pyramid's coarsest level size.
    """
    ms = np.asarray(matched_src, dtype=np.float64).reshape(-1, 3)
    mt = np.asarray(matched_tgt, dtype=np.float64).reshape(-1, 3)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (len(ms) == len(mt) == len(w)):
        raise InputError("matched arrays differ in length")
    if len(w) < cfg.min_pts:
        raise RefineFailure(f"{len(w)} matched points, need at least {cfg.min_pts}")
    if budget is None:
        if rcfg.node_budget is not None:
            budget = (rcfg.node_budget, rcfg.node_budget)
        else:
            budget = (len(src_pyramid[-1]), len(tgt_pyramid[-1]))
    src_pool = src_pyramid[rcfg.search_level]
    tgt_pool = tgt_pyramid[rcfg.search_level]

    if rcfg.strategy == "random":
        rng = np.random.default_rng(rcfg.seed)
        si = np.sort(rng.choice(len(src_pool), size=min(budget[0], len(src_pool)), replace=False))
        ti = np.sort(rng.choice(len(tgt_pool), size=min(budget[1], len(tgt_pool)), replace=False))
        empty = np.empty((0, 3))
        return RefinedNodes(src_pool.select(si), tgt_pool.select(ti), si, ti, empty, empty)

    src_centers = _side_centers(ms, w, cfg, rcfg.strategy)
    tgt_centers = _side_centers(mt, w, cfg, rcfg.strategy)
    si = neighborhood_augmentation(src_pool, src_centers, budget[0])
    ti = neighborhood_augmentation(tgt_pool, tgt_centers, budget[1])
    return RefinedNodes(src_pool.select(si), tgt_pool.select(ti), si, ti, src_centers, tgt_centers)

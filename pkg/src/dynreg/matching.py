"""Coarse node matching, optimal-transport normalization and patch-level point matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, InputError
from .geometry import PointCloud, SamplingPyramid, SpatialIndex


@dataclass(frozen=True)
class MatchingParams:
    k: int = 256
    patch_cap: int = 32
    sinkhorn_iters: int = 100
    dustbin_logit: float = 1.0
    # similarity logits are sim / temperature, sim in [0, 1]
    temperature: float = 0.1
    # multiplies the median-distance kernel width; < 1 tightens the kernel
    kernel_scale: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.patch_cap < 1:
            raise ConfigError("patch_cap must be >= 1")
        if self.temperature <= 0 or self.kernel_scale <= 0:
            raise ConfigError("temperature and kernel_scale must be positive")


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Index pairs into a source and a target cloud, with weights in [0, 1].

    ``patch`` optionally records which patch produced each pair.
    """

    src: np.ndarray
    tgt: np.ndarray
    weights: np.ndarray
    patch: Optional[np.ndarray] = None

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        tgt = np.asarray(self.tgt, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (len(src) == len(tgt) == len(w)):
            raise InputError("correspondence arrays differ in length")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise InputError("correspondence weights must be finite and in [0, 1]")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "tgt", tgt)
        object.__setattr__(self, "weights", w)
        if self.patch is not None:
            object.__setattr__(self, "patch", np.asarray(self.patch, dtype=np.int64).reshape(-1))

    @classmethod
    def empty(cls) -> "CorrespondenceSet":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    def __len__(self):
        return len(self.src)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.src, self.tgt], axis=1)

    def subset(self, mask) -> "CorrespondenceSet":
        if not isinstance(mask, slice):
            mask = np.asarray(mask)
        out = object.__new__(CorrespondenceSet)
        # a selection of an already validated set needs no re-validation
        for name in ("src", "tgt", "weights", "patch"):
            value = getattr(self, name)
            object.__setattr__(out, name, None if value is None else value[mask])
        return out

    def validate(self, n_src: int, n_tgt: int):
        if len(self) and (self.src.min() < 0 or self.src.max() >= n_src
                          or self.tgt.min() < 0 or self.tgt.max() >= n_tgt):
            raise InputError("correspondence index out of range")
        if len(np.unique(self.pairs, axis=0)) != len(self):
            raise InputError("duplicate correspondence pair")


def _logsumexp(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m, axis=axis)


def sinkhorn_batched(logits, row_mask, col_mask, iterations: int, dustbin_logit: float):
    """Sinkhorn normalization with dustbins over a padded batch.

    Runs in the scaling domain when the logit range makes that exact in
    float64 and in the log domain otherwise.

    ``logits`` is (B, M, N); masks flag the valid rows/columns of each item.
    Returns (B, M+1, N+1) couplings scaled so each valid real row and column
    sums to 1, the dustbin row sums to n and the dustbin column to m.
    """
    B, M, N = logits.shape
    m = row_mask.sum(axis=1).astype(np.float64)
    n = col_mask.sum(axis=1).astype(np.float64)
    Z = np.full((B, M + 1, N + 1), float(dustbin_logit))
    Z[:, :M, :N] = logits
    Z[:, :M, :][~row_mask] = -np.inf
    Z[:, :, :N] = np.where(col_mask[:, None, :], Z[:, :, :N], -np.inf)

    norm = -np.log(m + n)
    log_mu = np.concatenate([np.where(row_mask, norm[:, None], -np.inf), (np.log(n) + norm)[:, None]], axis=1)
    log_nu = np.concatenate([np.where(col_mask, norm[:, None], -np.inf), (np.log(m) + norm)[:, None]], axis=1)
    finite = Z[np.isfinite(Z)]
    if finite.size and finite.max() - finite.min() < _SCALING_RANGE:
        u, v = _scaling_potentials(Z, log_mu, log_nu, iterations)
    else:
        u, v = _log_potentials(Z, log_mu, log_nu, iterations)
    with np.errstate(invalid="ignore"):
        P = np.exp(Z + u[:, :, None] + v[:, None, :] - norm[:, None, None])
    return np.nan_to_num(P, nan=0.0)


# exp(-200) is far from underflow, so scaling-domain updates cannot lose mass
_SCALING_RANGE = 200.0


def _scaling_potentials(Z, log_mu, log_nu, iterations):
    """Sinkhorn in the scaling domain; returns log potentials equal to the log-domain ones."""
    shift = np.max(np.where(np.isfinite(Z), Z, -np.inf), axis=(1, 2), keepdims=True)
    K = np.exp(Z - shift)
    a = np.exp(log_mu)
    b = np.exp(log_nu)
    Kt = np.ascontiguousarray(np.swapaxes(K, 1, 2))
    v = np.ones_like(b)[:, :, None]
    u = np.ones_like(a)[:, :, None]
    a, b = a[:, :, None], b[:, :, None]
    # masked rows/columns have zero mass and an all-zero kernel line; the floor keeps them at 0
    with np.errstate(divide="ignore"):
        for _ in range(iterations):
            u = a / np.maximum(np.matmul(K, v), 1e-300)
            v = b / np.maximum(np.matmul(Kt, u), 1e-300)
        u, v = u[:, :, 0], v[:, :, 0]
        lu = np.log(u) - shift[:, :, 0]
        lv = np.log(v)
    return lu, lv


def _log_potentials(Z, log_mu, log_nu, iterations):
    rvalid = np.isfinite(log_mu)
    cvalid = np.isfinite(log_nu)
    u = np.zeros(log_mu.shape)
    v = np.zeros(log_nu.shape)
    with np.errstate(invalid="ignore"):
        for _ in range(iterations):
            u = np.where(rvalid, log_mu - _logsumexp(Z + v[:, None, :], axis=2), -np.inf)
            v = np.where(cvalid, log_nu - _logsumexp(Z + u[:, :, None], axis=1), -np.inf)
    return u, v


def sinkhorn_normalize(scores, iterations: int = 100, dustbin_logit: float = 1.0, full: bool = False) -> np.ndarray:
    """Optimal-transport normalization of an (m, n) logit matrix with dustbins.

    Returns the m x n transport block, or the whole (m+1) x (n+1) matrix when
    ``full`` is set.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise InputError("scores must be a matrix")
    if not np.all(np.isfinite(s)):
        raise InputError("scores must be finite")
    m, n = s.shape
    P = sinkhorn_batched(s[None], np.ones((1, m), bool), np.ones((1, n), bool), iterations, dustbin_logit)[0]
    return P if full else P[:m, :n]


def _masked_median(d, mask):
    """Median of the masked entries of each (M, N) slice of a (B, M, N) array; nan if none."""
    B = d.shape[0]
    flat = np.sort(np.where(mask, d, np.inf).reshape(B, -1), axis=1)
    count = mask.reshape(B, -1).sum(axis=1)
    lo = np.take_along_axis(flat, np.maximum((count - 1) // 2, 0)[:, None], axis=1)[:, 0]
    hi = np.take_along_axis(flat, np.maximum(count // 2, 0)[:, None], axis=1)[:, 0]
    med = np.where(count > 0, 0.5 * (lo + hi), np.nan)
    return med[:, None, None]


def feature_similarity(fa, fb, kernel_scale: float = 1.0, mask=None):
    """Gaussian kernel on feature distance, width = median distance (per batch item)."""
    sq = (np.sum(fa * fa, axis=-1)[..., :, None] + np.sum(fb * fb, axis=-1)[..., None, :]
          - 2.0 * np.matmul(fa, np.swapaxes(fb, -1, -2)))
    d = np.sqrt(np.maximum(sq, 0.0))
    if mask is None:
        sigma = np.median(d, axis=(-2, -1), keepdims=True)
    else:
        sigma = _masked_median(d, mask)
    sigma = np.where(sigma > 1e-12, sigma, 1.0) * kernel_scale
    return np.exp(-(d**2) / (2 * sigma**2))


def coarse_match(src_nodes: PointCloud, tgt_nodes: PointCloud, k: int, params: MatchingParams = MatchingParams()) -> CorrespondenceSet:
    """Top-k node pairs of the Sinkhorn-normalized similarity matrix."""
    if src_nodes.features is None or tgt_nodes.features is None:
        raise ConfigError("coarse matching needs features on both clouds")
    if src_nodes.features.shape[1] != tgt_nodes.features.shape[1]:
        raise ConfigError("feature widths differ")
    if k < 1:
        raise ConfigError("k must be >= 1")
    sim = feature_similarity(src_nodes.features, tgt_nodes.features, params.kernel_scale)
    P = sinkhorn_normalize(sim / params.temperature, params.sinkhorn_iters, params.dustbin_logit)
    flat = P.ravel()
    k = min(k, flat.size)
    order = np.lexsort((np.arange(flat.size), -flat))[:k]
    src, tgt = np.divmod(order, P.shape[1])
    return CorrespondenceSet(src, tgt, np.clip(flat[order], 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class PatchAssignment:
    """Fine points grouped around nodes.

    ``members[i]`` lists node i's points nearest-first, padded with -1.
    """

    members: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.members)

    def members_of(self, node: int) -> np.ndarray:
        return self.members[node, : self.counts[node]]


def assign_patches(node_points, fine_points, cap: int) -> PatchAssignment:
    """Assign each fine point to its nearest node and keep the ``cap`` nearest per node."""
    node_points = np.asarray(node_points, dtype=np.float64)
    fine_points = np.asarray(fine_points, dtype=np.float64)
    if len(node_points) == 0:
        raise InputError("no nodes to group around")
    n_nodes = len(node_points)
    if len(fine_points) == 0:
        return PatchAssignment(np.full((n_nodes, cap), -1, np.int64), np.zeros(n_nodes, np.int64))
    dist, owner = SpatialIndex(node_points).nearest(fine_points)
    order = np.lexsort((np.arange(len(fine_points)), dist, owner))
    owner_sorted = owner[order]
    starts = np.searchsorted(owner_sorted, np.arange(n_nodes))
    rank = np.arange(len(order)) - starts[owner_sorted]
    keep = rank < cap
    members = np.full((n_nodes, cap), -1, np.int64)
    members[owner_sorted[keep], rank[keep]] = order[keep]
    counts = np.minimum(np.bincount(owner, minlength=n_nodes), cap)
    return PatchAssignment(members, counts)


def group_points(pyramid: SamplingPyramid, node_level: int, fine_level: int = 2, cap: int = 32) -> PatchAssignment:
    if node_level <= fine_level:
        raise InputError(f"node level {node_level} must be coarser than fine level {fine_level}")
    for lvl in (node_level, fine_level):
        if not 0 <= lvl < len(pyramid) or len(pyramid[lvl]) == 0:
            raise InputError(f"pyramid level {lvl} is empty or missing")
    return assign_patches(pyramid[node_level].points, pyramid[fine_level].points, cap)


def fine_match_batched(src_feats, tgt_feats, src_members, tgt_members, params: MatchingParams) -> CorrespondenceSet:
    """Mutual-top point matching inside many patch pairs at once.

    ``src_members``/``tgt_members`` are (P, cap) index arrays padded with -1.
    Pairs come back grouped by patch in ascending patch order.
    """
    src_members = np.atleast_2d(src_members)
    tgt_members = np.atleast_2d(tgt_members)
    rmask = src_members >= 0
    cmask = tgt_members >= 0
    live = rmask.any(axis=1) & cmask.any(axis=1)
    if not live.any():
        return CorrespondenceSet.empty()
    patch_ids = np.flatnonzero(live)
    sm, tm, rmask, cmask = src_members[live], tgt_members[live], rmask[live], cmask[live]
    fa = src_feats[np.where(rmask, sm, 0)]
    fb = tgt_feats[np.where(cmask, tm, 0)]
    pair_mask = rmask[:, :, None] & cmask[:, None, :]
    sim = feature_similarity(fa, fb, params.kernel_scale, pair_mask)
    P = sinkhorn_batched(sim / params.temperature, rmask, cmask, params.sinkhorn_iters, params.dustbin_logit)
    M, N = sm.shape[1], tm.shape[1]
    # dustbins take part in the argmax so unmatched points drop out
    row_best = np.argmax(np.where(np.concatenate([pair_mask, rmask[:, :, None]], 2), P[:, :M, :], -1.0), axis=2)
    col_best = np.argmax(np.where(np.concatenate([pair_mask, cmask[:, None, :]], 1), P[:, :, :N], -1.0), axis=1)
    b, i = np.nonzero(rmask & (row_best < N))
    j = row_best[b, i]
    mutual = col_best[b, j] == i
    b, i, j = b[mutual], i[mutual], j[mutual]
    w = np.clip(P[b, i, j], 0.0, 1.0)
    return CorrespondenceSet(sm[b, i], tm[b, j], w, patch_ids[b])


def fine_match(src_patch: PointCloud, tgt_patch: PointCloud, params: MatchingParams = MatchingParams()) -> CorrespondenceSet:
    """Point matching within one patch pair; indices are local to the patches."""
    if len(src_patch) == 0 or len(tgt_patch) == 0:
        raise InputError("fine matching needs non-empty patches")
    if src_patch.features is None or tgt_patch.features is None:
        raise ConfigError("fine matching needs features")
    out = fine_match_batched(src_patch.features, tgt_patch.features,
                             np.arange(len(src_patch))[None], np.arange(len(tgt_patch))[None], params)
    return CorrespondenceSet(out.src, out.tgt, out.weights)


def match_patches(src_level: PointCloud, tgt_level: PointCloud, coarse: CorrespondenceSet,
                  src_patches: PatchAssignment, tgt_patches: PatchAssignment,
                  params: MatchingParams) -> CorrespondenceSet:
    """Expand coarse node pairs to point pairs; patch id = position in ``coarse``."""
    if len(coarse) == 0:
        return CorrespondenceSet.empty()
    return fine_match_batched(src_level.features, tgt_level.features,
                              src_patches.members[coarse.src], tgt_patches.members[coarse.tgt], params)

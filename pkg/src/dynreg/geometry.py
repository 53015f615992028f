"""Point clouds, rigid transforms, neighbor queries and the voxel pyramid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, PyramidError


def _as_points(a, name="points") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InputError(f"{name} must have shape (N, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of 3D points with optional normals and features.

    ``anchors`` holds noise-free positions in a shared scene frame. Only the
    oracle descriptor reads them; synthetic pairs set them so that both views
    of a scene agree on what a "corresponding point" is.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None
    anchors: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        n = len(pts)
        if self.normals is not None:
            nrm = _as_points(self.normals, "normals")
            if len(nrm) != n:
                raise InputError("normals length differs from points")
            if n and np.any(np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > 1e-6):
                raise InputError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or len(feats) != n:
                raise InputError("features must have shape (N, D)")
            object.__setattr__(self, "features", feats)
        if self.anchors is not None:
            anc = _as_points(self.anchors, "anchors")
            if len(anc) != n:
                raise InputError("anchors length differs from points")
            object.__setattr__(self, "anchors", anc)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    @property
    def has_features(self) -> bool:
        return self.features is not None

    def select(self, idx) -> "PointCloud":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return PointCloud(self.points[idx], pick(self.normals), pick(self.features), pick(self.anchors))

    def with_features(self, features) -> "PointCloud":
        return replace(self, features=features)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "RigidTransform":
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (4, 4):
            raise InputError(f"homogeneous matrix must be 4x4, got {T.shape}")
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return bool(
            np.all(np.abs(R.T @ R - np.eye(3)) <= tol)
            and abs(np.linalg.det(R) - 1.0) <= tol
            and np.all(np.isfinite(self.translation))
        )

    def apply(self, points) -> np.ndarray:
        return _as_points(points) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``first`` and then ``second``."""
    return RigidTransform(
        second.rotation @ first.rotation,
        second.rotation @ first.translation + second.translation,
    )


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix; ``angle`` in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_transform(rng: np.random.Generator, max_angle_deg: float = 180.0, max_translation: float = 1.0) -> RigidTransform:
    axis = rng.normal(size=3)
    angle = np.deg2rad(rng.uniform(0.0, max_angle_deg))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = direction * max_translation * rng.uniform(0.0, 1.0) ** (1 / 3)
    return RigidTransform(rotation_about_axis(axis, angle), t)


def apply_transform(cloud: PointCloud, T: RigidTransform) -> PointCloud:
    normals = None if cloud.normals is None else cloud.normals @ T.rotation.T
    if normals is not None:
        # keep the unit-norm invariant against rounding drift
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    # the pre-transform positions become anchors, so a moved copy keeps its identity
    anchors = cloud.points if cloud.anchors is None else cloud.anchors
    return PointCloud(T.apply(cloud.points), normals, cloud.features, anchors)


class SpatialIndex:
    """Read-only kd-tree over a cloud; results are sorted by (distance, index)."""

    def __init__(self, cloud):
        pts = cloud.points if isinstance(cloud, PointCloud) else _as_points(cloud)
        self.points = pts
        self._tree = cKDTree(pts) if len(pts) else None

    def __len__(self):
        return len(self.points)

    def radius(self, query, r: float) -> np.ndarray:
        """Indices with distance <= r to ``query``, ascending by index."""
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        q = np.asarray(query, dtype=np.float64)
        # pad the tree radius then filter exactly so boundary points match a brute-force scan
        cand = np.asarray(self._tree.query_ball_point(q, r * (1 + 1e-9) + 1e-12), dtype=np.int64)
        if cand.size == 0:
            return cand
        d = np.linalg.norm(self.points[cand] - q, axis=1)
        return np.sort(cand[d <= r])

    def radius_many(self, queries, r: float) -> List[np.ndarray]:
        return [self.radius(q, r) for q in _as_points(queries, "queries")]

    def knn(self, queries, k: int):
        """(distances, indices) of the k nearest points, ties broken by lower index."""
        queries = _as_points(queries, "queries")
        n = len(self.points)
        if n == 0:
            raise InputError("knn query on an empty index")
        k = min(k, n)
        d, idx = self._tree.query(queries, k=k)
        kth = np.asarray(d).reshape(len(queries), k)[:, -1]
        out_d = np.empty((len(queries), k))
        out_i = np.empty((len(queries), k), dtype=np.int64)
        # every point tied with the k-th neighbour is a candidate, so ties re-rank by index
        balls = self._tree.query_ball_point(queries, kth * (1 + 1e-9) + 1e-12)
        for row, cand in enumerate(balls):
            cand = np.asarray(cand, dtype=np.int64)
            dist = np.linalg.norm(self.points[cand] - queries[row], axis=1)
            order = np.lexsort((cand, dist))[:k]
            out_d[row], out_i[row] = dist[order], cand[order]
        return out_d, out_i

    def nearest(self, queries):
        """(distance, index) of the nearest point; equal distances go to the lower index."""
        queries = _as_points(queries, "queries")
        if len(self.points) == 0:
            raise InputError("nearest query on an empty index")
        if len(self.points) == 1:
            return np.linalg.norm(queries - self.points[0], axis=1), np.zeros(len(queries), np.int64)
        kk = min(4, len(self.points))
        _, idx = self._tree.query(queries, k=kk)
        d = np.linalg.norm(self.points[idx] - queries[:, None, :], axis=2)
        pick = np.lexsort((idx, d), axis=-1)[:, 0]
        rows = np.arange(len(queries))
        best_d, best_i = d[rows, pick], idx[rows, pick].astype(np.int64)
        # the k-th candidate may be tied with the nearest, so more ties may lie beyond it
        for row in np.flatnonzero(d.max(axis=1) <= best_d * (1 + 1e-9) + 1e-12):
            best_i[row] = self.radius(queries[row], best_d[row])[0]
        return best_d, best_i


def grid_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """One point per occupied voxel at the centroid of its members.

    Output voxels are ordered by the index of their first member, so a cloud
    that already has at most one point per voxel comes back unchanged.
    """
    if not voxel > 0:
        raise InputError(f"voxel must be positive, got {voxel}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    keys -= keys.min(axis=0)
    span = keys.max(axis=0) + 1
    if np.prod(span.astype(np.float64)) < 2**62:
        flat = (keys[:, 0] * span[1] + keys[:, 1]) * span[2] + keys[:, 2]
        _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    else:
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    group = rank[inverse]
    m = len(order)
    counts = np.bincount(group, minlength=m).astype(np.float64)

    def mean(a):
        return np.stack([np.bincount(group, weights=col, minlength=m) for col in a.T], axis=1) / counts[:, None]

    if m == len(cloud) and np.array_equal(group, np.arange(m)):
        return cloud
    normals = None
    if cloud.normals is not None:
        summed = mean(cloud.normals)
        norms = np.linalg.norm(summed, axis=1)
        if np.all(norms > 1e-8):
            normals = summed / norms[:, None]
    features = None if cloud.features is None else mean(cloud.features)
    anchors = None if cloud.anchors is None else mean(cloud.anchors)
    return PointCloud(mean(cloud.points), normals, features, anchors)


@dataclass(frozen=True, eq=False)
class SamplingPyramid:
    levels: List[PointCloud]
    parent_of: List[np.ndarray]  # parent_of[j][i] = index at level j-1; parent_of[0] is empty
    voxel_sizes: List[float]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, j) -> PointCloud:
        return self.levels[j]

    def with_levels(self, levels) -> "SamplingPyramid":
        return SamplingPyramid(list(levels), self.parent_of, self.voxel_sizes)


def build_pyramid(cloud: PointCloud, base_voxel: float, levels: int = 5) -> SamplingPyramid:
    """Voxel pyramid with the voxel size doubling per level.

    Level 0 is the input downsampled at ``base_voxel`` (the input itself when
    it is already that sparse). Each point maps to its nearest point one
    level up.
    """
    if levels < 2:
        raise InputError(f"pyramid needs at least 2 levels, got {levels}")
    voxels = [base_voxel * 2.0**j for j in range(levels)]
    clouds, parents = [], [np.empty(0, dtype=np.int64)]
    current = cloud
    for j, v in enumerate(voxels):
        current = grid_downsample(current if j else cloud, v)
        if len(current) == 0:
            raise PyramidError(f"pyramid level {j} is empty", level=j)
        if j and current is clouds[-1]:
            # already sparse at this voxel size: every point is its own parent
            parents.append(np.arange(len(current), dtype=np.int64))
        elif j:
            _, idx = SpatialIndex(clouds[-1]).nearest(current.points)
            parents.append(idx.astype(np.int64))
        clouds.append(current)
    return SamplingPyramid(clouds, parents, voxels)

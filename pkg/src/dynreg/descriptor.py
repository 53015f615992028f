"""Per-point descriptors standing in for learned encoders.

Two backends:

* ``geometric-histogram``: rotation-invariant histogram of (normal angle,
  normalized distance) over a radius neighbourhood. Needs normals.
* ``oracle``: smooth random-Fourier features of each point's scene-frame
  anchor, so the two views of a synthetic scene agree exactly on
  corresponding points. Noise and an exact fraction of corrupted points make
  the inlier ratio controllable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import PointCloud, SpatialIndex

KINDS = ("geometric-histogram", "oracle")


@dataclass(frozen=True)
class DescriptorBackend:
    kind: str = "oracle"
    # geometric-histogram
    radius: Optional[float] = None  # None: 2.5x the coarse-level voxel
    angle_bins: int = 11
    radial_bins: int = 5
    # oracle
    dims: int = 32
    bandwidth: float = 0.5
    bandwidth_per_voxel: Optional[float] = None  # set: bandwidth = this x the voxel of the described level
    octaves: float = 3.0
    noise: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0
    basis_seed: int = 1234

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown descriptor kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ConfigError("outlier_fraction must lie in [0, 1]")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.bandwidth <= 0 or (self.bandwidth_per_voxel is not None and self.bandwidth_per_voxel <= 0):
            raise ConfigError("bandwidths must be positive")

    @property
    def width(self) -> int:
        if self.kind == "oracle":
            return self.dims
        return self.angle_bins * self.radial_bins


def _l2_normalize(f: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    return f / np.where(norms > 0, norms, 1.0)


def estimate_normals(cloud: PointCloud, k: int = 10, index: Optional[SpatialIndex] = None) -> PointCloud:
    """PCA normals from the k nearest neighbours, oriented away from the centroid."""
    if len(cloud) < 3:
        raise ConfigError("normal estimation needs at least 3 points")
    index = index or SpatialIndex(cloud)
    _, nbr = index.knn(cloud.points, min(k, len(cloud)))
    local = cloud.points[nbr] - cloud.points[nbr].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", local, local)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = cloud.points - cloud.points.mean(axis=0)
    flip = np.einsum("ij,ij->i", normals, outward) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(cloud.points, normals, cloud.features, cloud.anchors)


def _histogram_features(cloud, backend, index, radius):
    n = len(cloud)
    na, nr = backend.angle_bins, backend.radial_bins
    hist = np.zeros((n, na * nr))
    pairs = index._tree.query_pairs(radius, output_type="ndarray") if n else np.empty((0, 2), int)
    if len(pairs):
        i = np.concatenate([pairs[:, 0], pairs[:, 1]])
        j = np.concatenate([pairs[:, 1], pairs[:, 0]])
        d = np.linalg.norm(cloud.points[i] - cloud.points[j], axis=1)
        keep = d <= radius
        i, j, d = i[keep], j[keep], d[keep]
        cosang = np.clip(np.einsum("ij,ij->i", cloud.normals[i], cloud.normals[j]), -1.0, 1.0)
        abin = np.minimum((np.arccos(cosang) / math.pi * na).astype(np.int64), na - 1)
        rbin = np.minimum((d / radius * nr).astype(np.int64), nr - 1)
        np.add.at(hist, (i, abin * nr + rbin), 1.0)
    # isolated points get a fixed marker so every feature stays unit length
    hist[hist.sum(axis=1) == 0, 0] = 1.0
    return _l2_normalize(hist)


def _oracle_basis(backend, bandwidth):
    rng = np.random.default_rng(backend.basis_seed)
    # length scales spread over ``octaves`` octaves below the bandwidth
    scales = bandwidth * 2.0 ** -rng.uniform(0.0, backend.octaves, size=backend.dims)
    omega = rng.normal(size=(backend.dims, 3)) / scales[:, None]
    phase = rng.uniform(0.0, 2 * math.pi, size=backend.dims)
    return omega, phase


def corrupted_indices(n: int, backend: DescriptorBackend, stream: int = 0) -> np.ndarray:
    count = math.ceil(round(backend.outlier_fraction * n, 9))
    rng = np.random.default_rng([backend.seed, stream, 0])
    return np.sort(rng.choice(n, size=count, replace=False)) if count else np.empty(0, dtype=np.int64)


def _oracle_features(cloud, backend, stream, level_voxel):
    n = len(cloud)
    pos = cloud.anchors if cloud.anchors is not None else cloud.points
    bandwidth = backend.bandwidth
    if backend.bandwidth_per_voxel is not None:
        if level_voxel is None:
            raise ConfigError("bandwidth_per_voxel needs the voxel size of the described level")
        bandwidth = backend.bandwidth_per_voxel * level_voxel
    omega, phase = _oracle_basis(backend, bandwidth)
    feats = np.cos(pos @ omega.T + phase)
    rng = np.random.default_rng([backend.seed, stream, 1])
    if backend.noise > 0:
        feats = feats + rng.normal(scale=backend.noise, size=feats.shape)
    bad = corrupted_indices(n, backend, stream)
    if bad.size:
        feats[bad] = rng.uniform(-1.0, 1.0, size=(bad.size, backend.dims))
    return _l2_normalize(feats)


def describe(cloud: PointCloud, backend: DescriptorBackend, index: Optional[SpatialIndex] = None,
             voxel: Optional[float] = None, stream: int = 0, level_voxel: Optional[float] = None) -> PointCloud:
    """Return ``cloud`` with an L2-normalized feature vector per point.

    ``voxel`` is the coarse-level voxel size (sets the default histogram
    radius); ``level_voxel`` is the voxel size of ``cloud`` itself (scales the
    oracle bandwidth when ``bandwidth_per_voxel`` is set). ``stream``
    separates the oracle's random corruption between clouds that share a
    seed (e.g. source and target of one pair).
    """
    if backend.kind == "geometric-histogram":
        if cloud.normals is None:
            raise ConfigError("geometric-histogram descriptor requires normals")
        radius = backend.radius
        if radius is None:
            if voxel is None:
                raise ConfigError("histogram radius unset and no voxel size to derive it from")
            radius = 2.5 * voxel
        index = index or SpatialIndex(cloud)
        feats = _histogram_features(cloud, backend, index, radius)
    else:
        feats = _oracle_features(cloud, backend, stream, level_voxel)
    return cloud.with_features(feats)

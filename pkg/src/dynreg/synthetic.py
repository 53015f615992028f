"""Procedural plane-and-box scenes cut into two overlapping, rigidly displaced views."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, GenerationError
from .geometry import PointCloud, RigidTransform, apply_transform, random_transform

SCENE_KINDS = ("room", "corridor", "outdoor-strip")


@dataclass(frozen=True)
class SceneSpec:
    kind: str = "room"
    overlap: float = 0.5
    noise: float = 0.0
    outlier_fraction: float = 0.0  # clutter points per view, as a fraction of the view size
    max_rotation: float = 30.0  # degrees
    max_translation: float = 0.5  # meters
    seed: int = 0
    spacing: float = 0.2  # surface sampling distance, meters
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind {self.kind!r}")
        if not 0 < self.overlap <= 1:
            raise ConfigError("overlap must lie in (0, 1]")
        if self.noise < 0 or self.outlier_fraction < 0 or self.spacing <= 0 or self.scale <= 0:
            raise ConfigError("noise, outlier_fraction, spacing and scale must be non-negative/positive")


@dataclass(eq=False)
class SyntheticPair:
    src: PointCloud
    tgt: PointCloud
    gt: RigidTransform
    overlap_pairs: np.ndarray  # (K, 2) indices of source/target points sampled from the same scene point
    measured_overlap: float
    spec: SceneSpec = field(default_factory=SceneSpec)

    def __iter__(self):
        return iter((self.src, self.tgt, self.gt))

    def gt_correspondences(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ground-truth pairs as (source points, target points)."""
        return self.src.points[self.overlap_pairs[:, 0]], self.tgt.points[self.overlap_pairs[:, 1]]


def _box(lo, hi, open_bottom=True) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Outward-facing rectangles (origin, u, v) of an axis-aligned box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    ex = np.diag(hi - lo)
    faces = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        for side in (0, 1):
            if axis == 2 and side == 0 and open_bottom:
                continue
            origin = lo.copy()
            origin[axis] = hi[axis] if side else lo[axis]
            faces.append((origin, ex[a], ex[b]))
    return faces


def _room_faces(w, d, h):
    """Floor plus four inward walls of a w x d x h room."""
    return [
        (np.zeros(3), np.array([w, 0, 0.0]), np.array([0, d, 0.0])),
        (np.zeros(3), np.array([w, 0, 0.0]), np.array([0, 0, h])),
        (np.array([0, d, 0.0]), np.array([w, 0, 0.0]), np.array([0, 0, h])),
        (np.zeros(3), np.array([0, d, 0.0]), np.array([0, 0, h])),
        (np.array([w, 0, 0.0]), np.array([0, d, 0.0]), np.array([0, 0, h])),
    ]


def _scene_faces(spec: SceneSpec, rng: np.random.Generator):
    s = spec.scale
    if spec.kind == "room":
        w, d, h = 4.0 * s, 3.0 * s, 2.5 * s
        n_boxes = 4
    elif spec.kind == "corridor":
        w, d, h = 9.0 * s, 1.6 * s, 2.5 * s
        n_boxes = 5
    else:
        w, d, h = 24.0 * s, 7.0 * s, 0.0
        n_boxes = 8
    faces = _room_faces(w, d, h) if h > 0 else [(np.zeros(3), np.array([w, 0, 0.0]), np.array([0, d, 0.0]))]
    for _ in range(n_boxes):
        size = rng.uniform([0.3, 0.3, 0.3], [1.2, 1.0, 1.5]) * s * (3.0 if spec.kind == "outdoor-strip" else 1.0)
        size = np.minimum(size, [w * 0.4, d * 0.6, max(h, 4 * s) * 0.8])
        lo = np.array([rng.uniform(0, w - size[0]), rng.uniform(0, d - size[1]), 0.0])
        faces.extend(_box(lo, lo + size))
    return faces


def sample_faces(faces, spacing: float, rng: np.random.Generator):
    """Blue-noise surface samples: jittered grid per face, then min-distance pruning.

    Every pair of returned points is at least ``0.5 * spacing`` apart.
    """
    pts, nrm = [], []
    jitter = 0.2 * spacing
    for origin, u, v in faces:
        lu, lv = np.linalg.norm(u), np.linalg.norm(v)
        nu, nv = max(int(round(lu / spacing)), 1), max(int(round(lv / spacing)), 1)
        gu = (np.arange(nu) + 0.5) / nu
        gv = (np.arange(nv) + 0.5) / nv
        a, b = np.meshgrid(gu, gv, indexing="ij")
        a = a.ravel() + rng.uniform(-jitter, jitter, a.size) / lu
        b = b.ravel() + rng.uniform(-jitter, jitter, b.size) / lv
        p = origin + a[:, None] * u + b[:, None] * v
        n = np.cross(u, v)
        pts.append(p)
        nrm.append(np.repeat((n / np.linalg.norm(n))[None], len(p), axis=0))
    pts = np.concatenate(pts)
    nrm = np.concatenate(nrm)
    pairs = cKDTree(pts).query_pairs(0.5 * spacing, output_type="ndarray")
    drop = np.zeros(len(pts), bool)
    for i, j in sorted(map(tuple, pairs)):
        if not drop[i]:
            drop[j] = True
    return pts[~drop], nrm[~drop]


def mutual_overlap(src_pts, tgt_pts, radius: float = 0.05) -> float:
    """Fraction of source points with a mutual nearest neighbour within ``radius``."""
    if len(src_pts) == 0 or len(tgt_pts) == 0:
        return 0.0
    d, j = cKDTree(tgt_pts).query(src_pts)
    _, i_back = cKDTree(src_pts).query(tgt_pts)
    mutual = (i_back[j] == np.arange(len(src_pts))) & (d <= radius)
    return float(mutual.sum()) / len(src_pts)


def _split_views(points, overlap, direction):
    proj = points @ direction
    order = np.argsort(proj, kind="stable")
    n = len(points)
    frac = 1.0 / (2.0 - overlap)
    keep = int(round(frac * n))
    src_idx = np.sort(order[:keep])
    tgt_idx = np.sort(order[n - keep:])
    return src_idx, tgt_idx


def _clutter(rng, pts, fraction):
    count = int(round(fraction * len(pts)))
    if count == 0:
        return np.empty((0, 3))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return rng.uniform(lo, hi, size=(count, 3))


def generate_pair(spec: SceneSpec, overlap_radius: float = 0.05, tolerance: float = 0.05,
                  max_attempts: int = 50) -> SyntheticPair:
    """Two partial views of one scene; the target is moved by ``gt`` (source frame -> target frame)."""
    for attempt in range(max_attempts):
        rng = np.random.default_rng([spec.seed, attempt])
        scene, normals = sample_faces(_scene_faces(spec, rng), spec.spacing, rng)
        phi = rng.uniform(0, 2 * np.pi)
        direction = np.array([np.cos(phi), np.sin(phi), 0.0])
        src_idx, tgt_idx = _split_views(scene, spec.overlap, direction)
        if spec.max_rotation == 0 and spec.max_translation == 0:
            gt = RigidTransform.identity()
        else:
            gt = random_transform(rng, spec.max_rotation, spec.max_translation)

        src_pts = scene[src_idx] + rng.normal(scale=spec.noise, size=(len(src_idx), 3)) * (spec.noise > 0)
        tgt_local = scene[tgt_idx] + rng.normal(scale=spec.noise, size=(len(tgt_idx), 3)) * (spec.noise > 0)
        src_anchor, tgt_anchor = scene[src_idx], scene[tgt_idx]
        src_nrm, tgt_nrm = normals[src_idx], normals[tgt_idx]

        clutter_s = _clutter(rng, src_pts, spec.outlier_fraction)
        clutter_t = _clutter(rng, tgt_local, spec.outlier_fraction)
        up = np.tile([0.0, 0.0, 1.0], (len(clutter_s), 1))
        src = PointCloud(np.vstack([src_pts, clutter_s]), np.vstack([src_nrm, up]), None,
                         np.vstack([src_anchor, clutter_s]))
        up = np.tile([0.0, 0.0, 1.0], (len(clutter_t), 1))
        tgt_scene_frame = PointCloud(np.vstack([tgt_local, clutter_t]), np.vstack([tgt_nrm, up]), None,
                                     # clutter anchors are shifted away so they never coincide across views
                                     np.vstack([tgt_anchor, clutter_t + 1e3]))
        tgt = apply_transform(tgt_scene_frame, gt)

        _, si, ti = np.intersect1d(src_idx, tgt_idx, return_indices=True)
        pairs = np.stack([si, ti], axis=1).astype(np.int64)
        measured = mutual_overlap(src_pts, tgt_local, overlap_radius * spec.scale)
        if abs(measured - spec.overlap) <= tolerance:
            return SyntheticPair(src, tgt, gt, pairs, measured, spec)
    raise GenerationError(f"overlap {spec.overlap} not reached within {max_attempts} attempts "
                          f"(last measured {measured:.3f})")

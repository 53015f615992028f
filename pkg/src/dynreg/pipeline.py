"""Two-stage registration: global matching, then refined local iterations with early exit."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import classifier as clf
from .classifier import ClassifierConfig
from .descriptor import DescriptorBackend, describe
from .errors import ConfigError, InputError, RefineFailure, RegistrationFailure
from .geometry import PointCloud, RigidTransform, SamplingPyramid, build_pyramid
from .matching import CorrespondenceSet, MatchingParams, assign_patches, coarse_match, match_patches
from .refine import ClusterConfig, RefineConfig, refined_nodes
from .solver import LGRResult, SolverConfig, local_to_global

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    base_voxel: float = 0.025
    levels: int = 5
    node_level: int = -1  # negative counts from the coarsest level
    fine_level: int = 2
    local_fine_level: int = 1
    descriptor: DescriptorBackend = field(default_factory=DescriptorBackend)
    matching: MatchingParams = field(default_factory=MatchingParams)
    local_matching: MatchingParams = field(default_factory=lambda: MatchingParams(k=256, patch_cap=16, kernel_scale=0.5))
    unique_params: bool = True  # False: local stages reuse the global matching parameters
    solver: SolverConfig = field(default_factory=SolverConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    radius_schedule: Tuple[float, ...] = (0.125, 0.25, 0.375, 0.5)
    refine: RefineConfig = field(default_factory=RefineConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    max_iterations: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.levels < 2:
            raise ConfigError("levels must be >= 2")
        node = self.node_level % self.levels
        for name in ("fine_level", "local_fine_level"):
            lvl = getattr(self, name)
            if not 0 <= lvl < node:
                raise ConfigError(f"{name}={lvl} must be finer than the node level {node}")
        if not 0 <= self.refine.search_level < self.levels:
            raise ConfigError("refine.search_level outside the pyramid")
        if not self.radius_schedule or min(self.radius_schedule) <= 0:
            raise ConfigError("radius_schedule needs positive entries")

    @property
    def coarse_level(self) -> int:
        return self.node_level % self.levels

    def cluster_for(self, iteration: int) -> ClusterConfig:
        radius = self.radius_schedule[min(iteration, len(self.radius_schedule)) - 1]
        return replace(self.cluster, eps=float(radius))

    def local_params(self) -> MatchingParams:
        return self.local_matching if self.unique_params else self.matching


@dataclass
class StageRecord:
    stage: int
    transform: Optional[RigidTransform]
    inliers: int
    matches: int
    score: float
    decision: str
    wall_time: float
    note: str = ""

    @property
    def completed(self) -> bool:
        return self.transform is not None


@dataclass
class IterationTrace:
    stages: List[StageRecord] = field(default_factory=list)
    final_transform: Optional[RigidTransform] = None
    best_stage: int = -1
    exit_stage: int = -1
    exit_reason: str = ""

    def completed(self) -> List[StageRecord]:
        return [s for s in self.stages if s.completed]

    @property
    def stage_count(self) -> int:
        return len(self.completed())


@dataclass
class _StageState:
    """Positions and weights of a stage's point matches, consumed by the next stage."""

    lgr: LGRResult
    src_points: np.ndarray
    tgt_points: np.ndarray
    matches: CorrespondenceSet
    n_src_nodes: int
    n_tgt_nodes: int

    @property
    def matched_src(self):
        return self.src_points[self.matches.src]

    @property
    def matched_tgt(self):
        return self.tgt_points[self.matches.tgt]


class _Described:
    """Lazily attaches descriptor features to pyramid levels."""

    def __init__(self, pyramid: SamplingPyramid, backend: DescriptorBackend, side: int, coarse_voxel: float):
        self.pyramid = pyramid
        self.backend = backend
        self.side = side
        self.coarse_voxel = coarse_voxel
        self._cache: Dict[int, PointCloud] = {}

    def __getitem__(self, level: int) -> PointCloud:
        level = level % len(self.pyramid)
        if level not in self._cache:
            self._cache[level] = describe(self.pyramid[level], self.backend, voxel=self.coarse_voxel,
                                          stream=self.side * 1000 + level,
                                          level_voxel=self.pyramid.voxel_sizes[level])
        return self._cache[level]

    def featured_pyramid(self, levels) -> SamplingPyramid:
        out = list(self.pyramid.levels)
        for lvl in levels:
            out[lvl % len(out)] = self[lvl]
        return self.pyramid.with_levels(out)


def _split_patches(matches: CorrespondenceSet, n_patches: int) -> List[CorrespondenceSet]:
    if len(matches) == 0:
        return [CorrespondenceSet.empty() for _ in range(n_patches)]
    bounds = np.searchsorted(matches.patch, np.arange(n_patches + 1))
    return [matches.subset(slice(bounds[i], bounds[i + 1])) for i in range(n_patches)]


def _match_and_solve(src_nodes: PointCloud, tgt_nodes: PointCloud, src_fine: PointCloud, tgt_fine: PointCloud,
                     params: MatchingParams, solver: SolverConfig) -> _StageState:
    coarse = coarse_match(src_nodes, tgt_nodes, params.k, params)
    src_patches = assign_patches(src_nodes.points, src_fine.points, params.patch_cap)
    tgt_patches = assign_patches(tgt_nodes.points, tgt_fine.points, params.patch_cap)
    matches = match_patches(src_fine, tgt_fine, coarse, src_patches, tgt_patches, params)
    if len(matches) < 3:
        raise RegistrationFailure(f"only {len(matches)} point correspondences",
                                  diagnostics={"coarse": len(coarse), "matches": len(matches)})
    patches = _split_patches(matches, len(coarse))
    lgr = local_to_global(src_fine.points, tgt_fine.points, patches, matches, solver)
    return _StageState(lgr, src_fine.points, tgt_fine.points, matches, len(src_nodes), len(tgt_nodes))


def _score(state: _StageState, cfg: ClassifierConfig) -> float:
    return clf.stage_score(state.lgr.inliers, state.src_points, state.tgt_points, cfg, total=len(state.matches))


def global_stage(src: _Described, tgt: _Described, cfg: PipelineConfig) -> _StageState:
    return _match_and_solve(src[cfg.coarse_level], tgt[cfg.coarse_level], src[cfg.fine_level], tgt[cfg.fine_level],
                            cfg.matching, cfg.solver)


def local_stage(src: _Described, tgt: _Described, previous: _StageState, iteration: int,
                cfg: PipelineConfig, budget: Tuple[int, int]) -> _StageState:
    """Refine nodes around the previous matches and register again with local parameters."""
    lvl = cfg.refine.search_level
    refined = refined_nodes(previous.matched_src, previous.matched_tgt, previous.matches.weights,
                            src.featured_pyramid([lvl]), tgt.featured_pyramid([lvl]),
                            cfg.cluster_for(iteration), replace(cfg.refine, seed=cfg.seed * 7919 + iteration),
                            budget=budget)
    if len(refined.src) == 0 or len(refined.tgt) == 0:
        raise RefineFailure("no refined nodes")
    params = cfg.local_params()
    fine = cfg.local_fine_level if cfg.unique_params else cfg.fine_level
    return _match_and_solve(refined.src, refined.tgt, src[fine], tgt[fine], params, cfg.solver)


def _prepare(cloud: PointCloud, cfg: PipelineConfig, side: int) -> _Described:
    pyr = build_pyramid(cloud, cfg.base_voxel, cfg.levels)
    if len(pyr[0]) < 3:
        raise InputError("cloud has fewer than 3 points after sampling")
    return _Described(pyr, cfg.descriptor, side, pyr.voxel_sizes[cfg.coarse_level])


def register_pair(src: PointCloud, tgt: PointCloud, cfg: PipelineConfig = PipelineConfig()
                  ) -> Tuple[RigidTransform, IterationTrace]:
    """Estimate the rigid transform mapping ``src`` onto ``tgt``.

    Returns the transform of the best-scoring completed stage and the trace
    of every stage run.
    """
    trace = IterationTrace()
    if cfg.descriptor.kind == "oracle" and (src.anchors is None or tgt.anchors is None):
        log.warning("oracle descriptor on clouds without anchors reads raw coordinates; "
                    "its features only agree if both clouds share a frame")
    s = _prepare(src, cfg, 0)
    t = _prepare(tgt, cfg, 1)
    ccfg = cfg.classifier

    t0 = time.perf_counter()
    try:
        state = global_stage(s, t, cfg)
    except RegistrationFailure as exc:
        trace.stages.append(StageRecord(0, None, 0, 0, 0.0, "failed", time.perf_counter() - t0, str(exc)))
        trace.exit_stage, trace.exit_reason = 0, "registration-failure"
        exc.trace = trace
        raise
    score = _score(state, ccfg)
    decision = clf.decide(0, score, None, ccfg) if ccfg.enabled else clf.CONTINUE
    trace.stages.append(StageRecord(0, state.lgr.transform, len(state.lgr.inliers), len(state.matches),
                                    score, decision, time.perf_counter() - t0))
    budget = (state.n_src_nodes, state.n_tgt_nodes)
    if cfg.refine.node_budget is not None:
        budget = (cfg.refine.node_budget, cfg.refine.node_budget)

    reason = "exit-success" if decision == clf.EXIT_SUCCESS else "iteration-cap"
    previous = state
    for i in range(1, cfg.max_iterations + 1):
        if decision != clf.CONTINUE:
            break
        t0 = time.perf_counter()
        try:
            state = local_stage(s, t, previous, i, cfg, budget)
        except (RefineFailure, RegistrationFailure) as exc:
            trace.stages.append(StageRecord(i, None, 0, 0, 0.0, "refine-failure", time.perf_counter() - t0, str(exc)))
            reason = "refine-failure"
            break
        score = _score(state, ccfg)
        prev_score = trace.stages[-1].score
        decision = clf.decide(i, score, prev_score, ccfg) if ccfg.enabled else clf.CONTINUE
        trace.stages.append(StageRecord(i, state.lgr.transform, len(state.lgr.inliers), len(state.matches),
                                        score, decision, time.perf_counter() - t0))
        if decision == clf.EXIT_DEGRADED:
            reason = "exit-degraded"
        previous = state

    done = trace.completed()
    best = max(range(len(done)), key=lambda k: (done[k].score, -k))
    trace.best_stage = done[best].stage
    trace.final_transform = done[best].transform
    trace.exit_stage = trace.stages[-1].stage
    trace.exit_reason = reason
    log.debug("exit %s at stage %d, best stage %d", reason, trace.exit_stage, trace.best_stage)
    return trace.final_transform, trace

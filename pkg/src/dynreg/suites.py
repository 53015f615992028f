"""Named synthetic suites and the pipeline configs they are run with.

``exact``
    Sparse rooms (20 cm spacing), 50% overlap, no noise; the oracle
    descriptor corrupts 30% of points. Registration should be exact.
``easy``
    Dense rooms (7 cm spacing), 60-90% overlap, 5 mm noise.
``low-overlap``
    Dense rooms, 15-30% overlap, 50% corrupted descriptors.

Scene sizes here are metres of a 4 x 3 x 2.5 m room, so radii and voxel
sizes are scaled up from the indoor defaults in :class:`PipelineConfig`.
"""

from __future__ import annotations

from typing import Callable, Dict, List

from .classifier import ClassifierConfig
from .descriptor import DescriptorBackend
from .matching import MatchingParams
from .pipeline import PipelineConfig
from .refine import ClusterConfig, RefineConfig
from .solver import SolverConfig
from .synthetic import SceneSpec

DENSE_SPACING = 0.07


def exact_config() -> PipelineConfig:
    return PipelineConfig(
        base_voxel=0.0125, levels=7, fine_level=2, local_fine_level=2,
        descriptor=DescriptorBackend(kind="oracle", outlier_fraction=0.3, bandwidth_per_voxel=1.0, octaves=2.0),
        matching=MatchingParams(k=64, patch_cap=32),
        local_matching=MatchingParams(k=64, patch_cap=16, kernel_scale=0.5),
        solver=SolverConfig(acceptance_threshold=0.05, refinement_rounds=5),
        cluster=ClusterConfig(min_pts=3),
        radius_schedule=(0.5, 0.75, 1.0, 1.25),
        refine=RefineConfig(search_level=5),
        classifier=ClassifierConfig(sigma_d=0.05, global_threshold=10.0),
    )


def synthetic_config() -> PipelineConfig:
    """Config for the dense ``easy`` and ``low-overlap`` suites."""
    return PipelineConfig(
        base_voxel=0.05, levels=6, node_level=-2, fine_level=2, local_fine_level=1,
        descriptor=DescriptorBackend(kind="oracle", outlier_fraction=0.5, bandwidth=0.6, octaves=1.0),
        matching=MatchingParams(k=32, patch_cap=32, temperature=0.05),
        local_matching=MatchingParams(k=32, patch_cap=16, kernel_scale=0.5, temperature=0.05),
        solver=SolverConfig(acceptance_threshold=0.2, refinement_rounds=5),
        cluster=ClusterConfig(min_pts=5),
        radius_schedule=(1.0, 1.25, 1.5, 1.75),
        refine=RefineConfig(search_level=2),
        # indoor thresholds (200; 20, 0, -20, -40) scaled by 0.15 to this scene size
        classifier=ClassifierConfig(sigma_d=0.2, global_threshold=30.0, local_thresholds=[3.0, 0.0, -3.0, -6.0]),
    )


def _cycle(lo, hi, k, period=7):
    return lo + (hi - lo) * (k % period) / (period - 1)


def exact_suite(n: int = 1000, start: int = 0) -> List[SceneSpec]:
    return [SceneSpec(seed=start + k, max_rotation=180.0, max_translation=1.0) for k in range(n)]


def easy_suite(n: int = 100, start: int = 7000) -> List[SceneSpec]:
    return [SceneSpec(overlap=_cycle(0.6, 0.9, k), noise=0.005, max_rotation=180.0, max_translation=1.0,
                      seed=start + k, spacing=DENSE_SPACING) for k in range(n)]


def low_overlap_suite(n: int = 100, start: int = 1000) -> List[SceneSpec]:
    return [SceneSpec(overlap=_cycle(0.15, 0.30, k), max_rotation=180.0, max_translation=1.0,
                      seed=start + k, spacing=DENSE_SPACING) for k in range(n)]


SUITES: Dict[str, Callable[..., List[SceneSpec]]] = {
    "exact": exact_suite,
    "easy": easy_suite,
    "low-overlap": low_overlap_suite,
}

CONFIGS: Dict[str, Callable[[], PipelineConfig]] = {
    "exact": exact_config,
    "easy": synthetic_config,
    "low-overlap": synthetic_config,
}

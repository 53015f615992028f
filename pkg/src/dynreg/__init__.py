"""Dynamic two-stage rigid point cloud registration."""

from .bench import BenchmarkReport, load_report, run_benchmark
from .classifier import ClassifierConfig, decide, sc_matrix, sc_score
from .config import format_config, load_config, parse_config
from .descriptor import DescriptorBackend, describe
from .errors import (ConfigError, DegenerateGeometryError, InputError, ParseError, RefineFailure,
                     RegistrationError, RegistrationFailure)
from .geometry import (PointCloud, RigidTransform, SamplingPyramid, SpatialIndex, apply_transform,
                       build_pyramid, compose, grid_downsample)
from .io import load_cloud, read_pose, save_cloud, write_pose
from .matching import CorrespondenceSet, MatchingParams, coarse_match, fine_match, group_points, sinkhorn_normalize
from .metrics import MetricConfig, registration_recall, rmse, rre, rte
from .pipeline import IterationTrace, PipelineConfig, register_pair
from .refine import ClusterConfig, RefineConfig, adaptive_dbscan, cluster_centroids, neighborhood_augmentation
from .solver import SolverConfig, count_inliers, local_to_global, weighted_kabsch
from .synthetic import SceneSpec, generate_pair

__version__ = "0.1.0"

__all__ = [
    "BenchmarkReport", "load_report", "run_benchmark",
    "ClassifierConfig", "decide", "sc_matrix", "sc_score",
    "format_config", "load_config", "parse_config",
    "DescriptorBackend", "describe",
    "ConfigError", "DegenerateGeometryError", "InputError", "ParseError", "RefineFailure",
    "RegistrationError", "RegistrationFailure",
    "PointCloud", "RigidTransform", "SamplingPyramid", "SpatialIndex", "apply_transform",
    "build_pyramid", "compose", "grid_downsample",
    "load_cloud", "read_pose", "save_cloud", "write_pose",
    "CorrespondenceSet", "MatchingParams", "coarse_match", "fine_match", "group_points", "sinkhorn_normalize",
    "MetricConfig", "registration_recall", "rmse", "rre", "rte",
    "IterationTrace", "PipelineConfig", "register_pair",
    "ClusterConfig", "RefineConfig", "adaptive_dbscan", "cluster_centroids", "neighborhood_augmentation",
    "SolverConfig", "count_inliers", "local_to_global", "weighted_kabsch",
    "SceneSpec", "generate_pair",
]

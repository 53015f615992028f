import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynreg.errors import ConfigError, InputError, RefineFailure
from dynreg.geometry import PointCloud, build_pyramid
from dynreg.refine import (NOISE, ClusterConfig, ClusterResult, RefineConfig, adaptive_dbscan, cluster_centroids, dbscan,
                           neighborhood_augmentation, refined_nodes, weighted_distances)

import oracles


@pytest.mark.parametrize("seed", range(30))
def test_dbscan_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(c, 0.1, size=(15, 3)) for c in rng.uniform(-2, 2, size=(3, 3))])
    pts = np.vstack([pts, rng.uniform(-3, 3, size=(10, 3))])
    w = rng.uniform(0.2, 1.0, len(pts))
    eps, min_pts = rng.uniform(0.1, 0.6), int(rng.integers(2, 6))
    got = dbscan(weighted_distances(pts, w), eps, min_pts)
    assert np.array_equal(got, oracles.dbscan(pts, w, eps, min_pts))


def _blobs(rng, n):
    centers = rng.uniform(-1, 1, size=(int(rng.integers(1, 6)), 3))
    pts = centers[rng.integers(0, len(centers), n)] + rng.normal(scale=rng.uniform(0.02, 0.2), size=(n, 3))
    return pts, rng.uniform(0, 1, n)


@pytest.mark.parametrize("seed", range(20))
def test_adaptive_dbscan_labels_match_reference_at_final_parameters(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 101))
    pts, w = _blobs(rng, n)
    res = adaptive_dbscan(pts, w, ClusterConfig(eps=0.1, min_pts=2))
    kept = res.kept
    ref = oracles.dbscan(pts[kept], w[kept], res.final_eps, res.final_min_pts)
    assert np.array_equal(res.labels[kept], ref)
    assert np.all(res.labels[~kept] == NOISE)
    assert 1 <= res.rounds <= n


def test_adaptive_dbscan_grows_until_count_stops():
    blobs = [np.full((6, 3), c, dtype=float) for c in (0.0, 5.0, 10.0)]
    pts = np.vstack(blobs) + np.random.default_rng(0).normal(scale=0.01, size=(18, 3))
    res = adaptive_dbscan(pts, np.ones(18), ClusterConfig(eps=0.1, min_pts=2, similarity_floor=0.0))
    assert res.cluster_count == 3 and res.rounds == 2


@pytest.mark.parametrize("n", [1, 2, 5, 50, 100])
def test_adversarial_coincident_points_terminate(n):
    res = adaptive_dbscan(np.zeros((n, 3)), np.ones(n), ClusterConfig(similarity_floor=0.0))
    assert res.rounds <= n
    assert res.cluster_count <= 1


@pytest.mark.parametrize("n", [1, 2, 5, 50, 100])
def test_adversarial_isolated_points_terminate(n):
    pts = np.arange(n, dtype=float)[:, None] * np.array([[100.0, 0, 0]])
    res = adaptive_dbscan(pts, np.ones(n), ClusterConfig(similarity_floor=0.0))
    assert res.rounds <= n
    assert res.cluster_count == 0 and np.all(res.labels == NOISE)


@given(st.integers(0, 2**32 - 1))
def test_cluster_sizes_respect_final_min_pts(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 80))
    pts, w = _blobs(rng, n)
    res = adaptive_dbscan(pts, w, ClusterConfig(eps=0.1, min_pts=2))
    lab = res.labels
    assert set(lab.tolist()) <= {NOISE} | set(range(res.cluster_count))
    for c in range(res.cluster_count):
        assert (lab == c).sum() >= res.final_min_pts


def test_similarity_floor_drops_low_weights():
    pts = np.zeros((8, 3))
    w = np.array([0.1] * 4 + [0.9] * 4)
    res = adaptive_dbscan(pts, w, ClusterConfig(min_pts=2, similarity_floor=0.5))
    assert np.all(res.labels[:4] == NOISE) and np.all(res.labels[4:] == 0)


def test_weighted_distance_formula():
    d = weighted_distances(np.array([[0.0, 0, 0], [3.0, 4, 0]]), np.array([0.5, 0.25]))
    assert d[0, 1] == 5.0 * 2.0 / (0.75 + 1e-6)
    assert np.array_equal(weighted_distances(np.array([[0.0, 0, 0], [3.0, 4, 0]]))[0, 1], 5.0)


def test_cluster_centroids():
    pts = np.array([[0.0, 0, 0], [2.0, 0, 0], [10.0, 0, 0], [5.0, 5, 5]])
    res = ClusterResult(np.array([0, 0, 1, -1]), 2, 1.0, 2)
    assert np.allclose(cluster_centroids(pts, res), [[1.0, 0, 0], [10.0, 0, 0]])


@given(st.integers(0, 2**32 - 1), st.integers(1, 80))
def test_augmentation_matches_brute_force(seed, budget):
    rng = np.random.default_rng(seed)
    pool = rng.integers(0, 5, size=(int(rng.integers(1, 60)), 3)).astype(float)  # lattice: many ties
    centers = rng.integers(0, 5, size=(int(rng.integers(1, 5)), 3)).astype(float)
    got = neighborhood_augmentation(pool, centers, budget)
    assert got.tolist() == oracles.augmentation(pool, centers, budget)
    assert len(got) == min(budget, len(pool))


def test_augmentation_rejects_bad_input():
    with pytest.raises(InputError):
        neighborhood_augmentation(np.empty((0, 3)), np.zeros((1, 3)), 1)
    with pytest.raises(InputError):
        neighborhood_augmentation(np.zeros((2, 3)), np.empty((0, 3)), 1)
    with pytest.raises(InputError):
        neighborhood_augmentation(np.zeros((2, 3)), np.zeros((1, 3)), 0)


def _pyramid(rng):
    return build_pyramid(PointCloud(rng.uniform(0, 4, size=(2000, 3))), 0.1, 4)


@pytest.mark.parametrize("strategy", ["dbscan", "average-center", "random"])
def test_refined_nodes_strategies(rng, strategy):
    pyr = _pyramid(rng)
    matched = np.vstack([rng.normal(1.0, 0.1, size=(30, 3)), rng.normal(3.0, 0.1, size=(30, 3))])
    w = rng.uniform(0.5, 1.0, 60)
    out = refined_nodes(matched, matched, w, pyr, pyr, ClusterConfig(eps=0.3, min_pts=3),
                        RefineConfig(strategy=strategy, search_level=1), budget=(20, 25))
    assert len(out.src) == 20 and len(out.tgt) == 25
    assert np.array_equal(out.src.points, pyr[1].points[out.src_index])
    if strategy == "dbscan":
        assert len(out.src_centers) == 2
    if strategy == "average-center":
        assert len(out.src_centers) == 1


def test_refined_nodes_failures(rng):
    pyr = _pyramid(rng)
    with pytest.raises(RefineFailure):
        refined_nodes(np.zeros((2, 3)), np.zeros((2, 3)), np.ones(2), pyr, pyr, ClusterConfig(min_pts=3))
    far = np.arange(10)[:, None] * np.array([[10.0, 0, 0]])
    with pytest.raises(RefineFailure):
        refined_nodes(far, far, np.ones(10), pyr, pyr, ClusterConfig(eps=0.1))
    with pytest.raises(InputError):
        refined_nodes(np.zeros((4, 3)), np.zeros((3, 3)), np.ones(4), pyr, pyr, ClusterConfig())


def test_config_validation():
    for bad in ({"eps": 0}, {"min_pts": 1}, {"eps_growth": 1.0}, {"similarity_floor": 1.0}):
        with pytest.raises(ConfigError):
            ClusterConfig(**bad)
    with pytest.raises(ConfigError):
        RefineConfig(strategy="kmeans")
    with pytest.raises(ConfigError):
        RefineConfig(node_budget=0)

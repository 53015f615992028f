import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynreg.errors import ConfigError, InputError
from dynreg.geometry import PointCloud
from dynreg.matching import (CorrespondenceSet, MatchingParams, _masked_median, assign_patches, coarse_match,
                             feature_similarity, fine_match, sinkhorn_normalize)

import oracles


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12), st.sampled_from([10, 50, 100]))
def test_sinkhorn_matches_oracle(seed, m, n, iters):
    s = np.random.default_rng(seed).normal(size=(m, n)) * 3
    got = sinkhorn_normalize(s, iters, 1.0, full=True)
    assert np.allclose(got, oracles.sinkhorn(s, iters, 1.0), rtol=1e-9, atol=1e-12)


def test_sinkhorn_log_domain_path_keeps_marginals(rng):
    s = rng.normal(size=(8, 6)) * 200  # logit range above the scaling-domain limit
    P = sinkhorn_normalize(s, 200, 1.0, full=True)
    assert np.all(np.isfinite(P))
    assert np.allclose(P.sum(axis=0), np.r_[np.ones(6), 8], atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_sinkhorn_marginal_residual_decreases(seed):
    s = np.random.default_rng(seed).normal(size=(15, 11)) * 4
    target = np.r_[np.ones(15), 11]
    res = [np.abs(sinkhorn_normalize(s, k, full=True).sum(axis=1) - target).sum() for k in (10, 50, 100)]
    assert res[0] >= res[1] >= res[2]


def test_sinkhorn_rejects_bad_input():
    with pytest.raises(InputError):
        sinkhorn_normalize(np.array([[np.nan]]))
    with pytest.raises(InputError):
        sinkhorn_normalize(np.zeros(3))


def test_feature_similarity_matches_oracle(rng):
    fa, fb = rng.normal(size=(7, 5)), rng.normal(size=(9, 5))
    assert np.allclose(feature_similarity(fa, fb, 0.7), oracles.similarity(fa, fb, 0.7), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_masked_median_equals_nanmedian(seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(4, 5, 6))
    mask = rng.uniform(size=d.shape) < 0.6
    mask[:, 0, 0] = True
    expect = np.nanmedian(np.where(mask, d, np.nan).reshape(4, -1), axis=1)
    assert np.allclose(_masked_median(d, mask)[:, 0, 0], expect)


def test_masked_median_of_nothing_is_nan():
    assert np.isnan(_masked_median(np.ones((1, 2, 2)), np.zeros((1, 2, 2), bool))).all()


def _nodes(rng, n, dims=8):
    f = rng.normal(size=(n, dims))
    return PointCloud(rng.uniform(size=(n, 3)), features=f / np.linalg.norm(f, axis=1, keepdims=True))


@pytest.mark.parametrize("seed", range(10))
def test_coarse_match_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    src, tgt = _nodes(rng, 20), _nodes(rng, 25)
    perm = rng.permutation(20)
    params = MatchingParams(k=30)
    a = coarse_match(src, tgt, 30, params)
    b = coarse_match(src.select(perm), tgt, 30, params)
    # permuted index i corresponds to original perm[i]
    pa = {(int(s), int(t)): w for s, t, w in zip(a.src, a.tgt, a.weights)}
    pb = {(int(perm[s]), int(t)): w for s, t, w in zip(b.src, b.tgt, b.weights)}
    assert pa.keys() == pb.keys()
    assert all(abs(pa[k] - pb[k]) < 1e-12 for k in pa)


def test_coarse_match_takes_top_k_of_transport(rng):
    src, tgt = _nodes(rng, 6), _nodes(rng, 5)
    params = MatchingParams(k=7)
    c = coarse_match(src, tgt, 7, params)
    sim = oracles.similarity(src.features, tgt.features, 1.0)
    P = oracles.sinkhorn(sim / params.temperature, params.sinkhorn_iters, params.dustbin_logit)[:6, :5]
    expect = np.argsort(-P.ravel(), kind="stable")[:7]
    assert (c.src * 5 + c.tgt).tolist() == expect.tolist()
    assert np.all((c.weights >= 0) & (c.weights <= 1))


def test_coarse_match_requires_features(rng):
    with pytest.raises(ConfigError):
        coarse_match(PointCloud(rng.uniform(size=(3, 3))), _nodes(rng, 3), 2)


@pytest.mark.parametrize("seed", range(10))
def test_fine_match_matches_mutual_top_oracle(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(2, 12, size=2)
    src, tgt = _nodes(rng, m), _nodes(rng, n)
    params = MatchingParams(kernel_scale=0.5)
    out = fine_match(src, tgt, params)
    sim = oracles.similarity(src.features, tgt.features, 0.5)
    P = oracles.sinkhorn(sim / params.temperature, params.sinkhorn_iters, params.dustbin_logit)
    expect = []
    for i in range(m):
        j = int(np.argmax(P[i]))
        if j < n and int(np.argmax(P[:, j])) == i:
            expect.append((i, j))
    assert list(zip(out.src.tolist(), out.tgt.tolist())) == expect
    assert np.allclose(out.weights, [P[i, j] for i, j in expect], rtol=1e-9)


def test_fine_match_recovers_identical_features(rng):
    f = rng.normal(size=(10, 16))
    c = PointCloud(rng.uniform(size=(10, 3)), features=f / np.linalg.norm(f, axis=1, keepdims=True))
    perm = rng.permutation(10)
    out = fine_match(c, c.select(perm), MatchingParams(kernel_scale=0.5, temperature=0.05))
    assert len(out) == 10
    assert np.array_equal(perm[out.tgt], out.src)


@pytest.mark.parametrize("seed", range(10))
def test_assign_patches_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    nodes = rng.uniform(size=(8, 3))
    fine = rng.uniform(size=(120, 3))
    cap = 6
    pa = assign_patches(nodes, fine, cap)
    d = np.linalg.norm(fine[:, None] - nodes[None], axis=-1)
    owner = d.argmin(axis=1)
    seen = []
    for i in range(len(nodes)):
        mine = np.flatnonzero(owner == i)
        mine = mine[np.lexsort((mine, d[mine, i]))][:cap]
        assert pa.members_of(i).tolist() == mine.tolist()
        assert np.all(pa.members[i, len(mine):] == -1)
        seen.extend(mine)
    assert len(seen) == len(set(seen))


def test_assign_patches_without_fine_points():
    pa = assign_patches(np.zeros((2, 3)), np.empty((0, 3)), 4)
    assert pa.counts.tolist() == [0, 0]


def test_correspondence_set_validation():
    with pytest.raises(InputError):
        CorrespondenceSet([0, 1], [0], [0.5, 0.5])
    with pytest.raises(InputError):
        CorrespondenceSet([0], [0], [1.5])
    with pytest.raises(InputError):
        CorrespondenceSet([0], [0], [np.nan])
    c = CorrespondenceSet([0, 0], [1, 1], [0.5, 0.5])
    with pytest.raises(InputError):
        c.validate(2, 2)
    with pytest.raises(InputError):
        CorrespondenceSet([3], [0], [0.5]).validate(2, 2)
    CorrespondenceSet([0, 1], [1, 0], [0.5, 0.5]).validate(2, 2)


def test_subset_keeps_patch_ids():
    c = CorrespondenceSet([0, 1, 2], [2, 1, 0], [0.1, 0.2, 0.3], patch=[0, 0, 1])
    s = c.subset(np.array([True, False, True]))
    assert s.src.tolist() == [0, 2] and s.patch.tolist() == [0, 1] and s.weights.tolist() == [0.1, 0.3]


def test_matching_params_validation():
    for bad in ({"k": 0}, {"patch_cap": 0}, {"temperature": 0.0}, {"kernel_scale": -1.0}):
        with pytest.raises(ConfigError):
            MatchingParams(**bad)

import logging
from dataclasses import replace

import numpy as np
import pytest

from dynreg.bench import pair_config
from dynreg.classifier import CONTINUE, EXIT_DEGRADED, EXIT_SUCCESS
from dynreg.errors import ConfigError, InputError, RefineFailure, RegistrationFailure
from dynreg.geometry import PointCloud
from dynreg.matching import MatchingParams
from dynreg.metrics import rre, rte
from dynreg.pipeline import PipelineConfig, _prepare, global_stage, register_pair
from dynreg.refine import RefineConfig, refined_nodes
from dynreg.suites import exact_config, exact_suite, low_overlap_suite, synthetic_config
from dynreg.synthetic import generate_pair

TERMINAL = {"exit-success", "exit-degraded", "iteration-cap", "refine-failure"}


def _run(spec, cfg):
    pair = generate_pair(spec)
    est, trace = register_pair(pair.src, pair.tgt, pair_config(cfg, spec))
    return pair, est, trace


def _check_trace(trace, cfg):
    assert 1 <= len(trace.stages) <= 1 + cfg.max_iterations
    assert [s.stage for s in trace.stages] == list(range(len(trace.stages)))
    assert trace.exit_reason in TERMINAL
    done = trace.completed()
    best = max(s.score for s in done)
    chosen = next(s for s in done if s.stage == trace.best_stage)
    assert chosen.score == best
    assert trace.final_transform is chosen.transform
    # only the last stage may carry a terminal decision
    for s in trace.stages[:-1]:
        assert s.decision == CONTINUE


@pytest.mark.parametrize("spec", exact_suite(5))
def test_exact_pairs_are_recovered(spec):
    cfg = exact_config()
    pair, est, trace = _run(spec, cfg)
    assert rre(est, pair.gt) < 0.01 and rte(est, pair.gt) < 1e-3
    _check_trace(trace, cfg)
    assert trace.exit_reason == "exit-success" and trace.stages[0].decision == EXIT_SUCCESS


@pytest.mark.parametrize("spec", low_overlap_suite(6))
def test_trace_contract_on_hard_pairs(spec):
    cfg = synthetic_config()
    _, _, trace = _run(spec, cfg)
    _check_trace(trace, cfg)
    if trace.exit_reason == "exit-degraded":
        assert trace.stages[-1].decision == EXIT_DEGRADED
        # a degraded stage never wins over the one before it
        assert trace.best_stage != trace.stages[-1].stage or trace.stages[-1].score >= trace.stages[-2].score


def test_classifier_off_runs_every_iteration():
    cfg = replace(synthetic_config(), classifier=replace(synthetic_config().classifier, enabled=False))
    _, _, trace = _run(low_overlap_suite(1)[0], cfg)
    assert len(trace.stages) == 1 + cfg.max_iterations or trace.exit_reason == "refine-failure"


@pytest.mark.parametrize("iterations", [0, 1, 2])
def test_iteration_cap(iterations):
    cfg = replace(synthetic_config(), max_iterations=iterations,
                  classifier=replace(synthetic_config().classifier, enabled=False))
    _, _, trace = _run(low_overlap_suite(2)[1], cfg)
    assert len(trace.stages) <= 1 + iterations


def test_registration_is_deterministic():
    spec = low_overlap_suite(1)[0]
    cfg = synthetic_config()
    _, a, ta = _run(spec, cfg)
    _, b, tb = _run(spec, cfg)
    assert np.array_equal(a.matrix(), b.matrix())
    assert [(s.stage, s.score, s.inliers, s.matches, s.decision) for s in ta.stages] == \
           [(s.stage, s.score, s.inliers, s.matches, s.decision) for s in tb.stages]


def test_failure_carries_trace():
    cfg = replace(exact_config(), matching=MatchingParams(k=1, patch_cap=1))
    pair = generate_pair(exact_suite(1)[0])
    with pytest.raises(RegistrationFailure) as exc:
        register_pair(pair.src, pair.tgt, cfg)
    assert exc.value.trace.exit_reason == "registration-failure"
    assert exc.value.trace.stages[0].decision == "failed"


def test_tiny_clouds_are_rejected():
    c = PointCloud(np.zeros((2, 3)))
    with pytest.raises(InputError):
        register_pair(c, c, exact_config())


def test_oracle_without_anchors_warns(caplog):
    pair = generate_pair(exact_suite(1)[0])
    bare = PointCloud(pair.src.points)
    with caplog.at_level(logging.WARNING, logger="dynreg.pipeline"):
        register_pair(bare, bare, exact_config())
    assert "anchors" in caplog.text


def test_same_frame_clouds_register_to_identity():
    pair = generate_pair(exact_suite(1)[0])
    bare = PointCloud(pair.src.points)
    est, _ = register_pair(bare, bare, exact_config())
    assert np.allclose(est.matrix(), np.eye(4), atol=1e-9)


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(max_iterations=-1)
    with pytest.raises(ConfigError):
        PipelineConfig(levels=1)
    with pytest.raises(ConfigError):
        PipelineConfig(fine_level=4)
    with pytest.raises(ConfigError):
        PipelineConfig(refine=RefineConfig(search_level=9))
    with pytest.raises(ConfigError):
        PipelineConfig(radius_schedule=())


def test_schedules_clamp_to_last_entry():
    cfg = PipelineConfig(radius_schedule=(0.1, 0.2))
    assert [cfg.cluster_for(i).eps for i in (1, 2, 3, 7)] == [0.1, 0.2, 0.2, 0.2]


def test_unique_params_switch():
    cfg = PipelineConfig()
    assert cfg.local_params() is cfg.local_matching
    assert replace(cfg, unique_params=False).local_params() is cfg.matching


def _refined_volumes(spec, cfg):
    cfg = pair_config(cfg, spec)
    pair = generate_pair(spec)
    s, t = _prepare(pair.src, cfg, 0), _prepare(pair.tgt, cfg, 1)
    state = global_stage(s, t, cfg)
    lvl = cfg.refine.search_level
    r = refined_nodes(state.matched_src, state.matched_tgt, state.matches.weights, s.featured_pyramid([lvl]),
                      t.featured_pyramid([lvl]), cfg.cluster_for(1), cfg.refine,
                      budget=(state.n_src_nodes, state.n_tgt_nodes))
    vol = lambda p: float(np.prod(p.max(axis=0) - p.min(axis=0)))
    return [(vol(r.src.points), vol(s[cfg.coarse_level].points)), (vol(r.tgt.points), vol(t[cfg.coarse_level].points))]


def test_refined_nodes_narrow_the_search_region_on_low_overlap_pairs():
    ratios = []
    for spec in low_overlap_suite(20):
        try:
            ratios += [a / b for a, b in _refined_volumes(spec, synthetic_config())]
        except RefineFailure:
            continue
    assert np.median(ratios) < 0.5


@pytest.mark.xfail(strict=True, raises=AssertionError, reason="refined nodes come from a finer level than the voxel-centroid coarse nodes, "
                                       "so on pairs whose matches spread over the whole view their bounding box "
                                       "can exceed the coarse one by a few percent")
def test_refined_node_bounding_box_never_exceeds_coarse_nodes():
    for spec in low_overlap_suite(40):
        try:
            volumes = _refined_volumes(spec, synthetic_config())
        except RefineFailure:
            continue
        for refined, coarse in volumes:
            assert refined <= coarse

"""Ablation runners: one switch per study, each producing labelled config variants."""

from __future__ import annotations

import csv
import io
from dataclasses import replace
from typing import Dict, List, Sequence, Tuple

from .bench import BenchmarkReport, run_benchmark
from .errors import ConfigError
from .pipeline import PipelineConfig
from .synthetic import SceneSpec

STUDIES = ("encoder", "classifier", "node", "iteration", "scorer")

# Early-exit thresholds per scorer, as multiples of the SC ones. IR is a
# percentage of surviving matches and SC^2 grows roughly with the square of
# the consistent-set size over the match count, so neither shares SC's scale.
SCORER_THRESHOLDS: Dict[str, Tuple[float, List[float]]] = {
    "ir": (50.0, [5.0, 0.0, -5.0, -10.0]),
}


def _scorer_variant(cfg: PipelineConfig, scorer: str) -> PipelineConfig:
    c = cfg.classifier
    if scorer == "sc":
        return cfg
    if scorer == "ir":
        g, local = SCORER_THRESHOLDS["ir"]
        return replace(cfg, classifier=replace(c, scorer="ir", global_threshold=g, local_thresholds=local))
    # SC^2 keeps the SC thresholds; for a clean consistent set of size K out of K matches both equal K
    return replace(cfg, classifier=replace(c, scorer="sc2"))


def variants(which: str, cfg: PipelineConfig) -> List[Tuple[str, PipelineConfig]]:
    """Labelled configs for one study; the first entry is the full method where one applies."""
    if which == "encoder":
        return [("unique-params", replace(cfg, unique_params=True)),
                ("shared-params", replace(cfg, unique_params=False))]
    if which == "classifier":
        return [("classifier-on", replace(cfg, classifier=replace(cfg.classifier, enabled=True))),
                ("classifier-off", replace(cfg, classifier=replace(cfg.classifier, enabled=False)))]
    if which == "node":
        return [(s, replace(cfg, refine=replace(cfg.refine, strategy=s)))
                for s in ("dbscan", "random", "average-center")]
    if which == "iteration":
        return [(f"iterations={m}", replace(cfg, max_iterations=m)) for m in range(5)]
    if which == "scorer":
        return [(s, _scorer_variant(cfg, s)) for s in ("sc", "sc2", "ir")]
    raise ConfigError(f"unknown ablation {which!r}; expected one of {STUDIES}")


def run_ablation(which: str, suite: Sequence[SceneSpec], cfg: PipelineConfig, workers: int = 1,
                 mode: str = "rmse-based", timing: bool = True) -> List[Tuple[str, BenchmarkReport]]:
    return [(label, run_benchmark(suite, v, workers=workers, mode=mode, timing=timing))
            for label, v in variants(which, cfg)]


SUMMARY_COLUMNS = ("variant", "rr", "median_rre", "median_rte", "median_rmse", "mean_stages",
                   "global_exit_fraction", "failures", "total_time")


def summary_csv(results: Sequence[Tuple[str, BenchmarkReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for label, rep in results:
        a = rep.aggregate
        w.writerow([label, repr(a.rr), repr(a.median_rre), repr(a.median_rte), repr(a.median_rmse),
                    repr(a.mean_stages), repr(a.global_exit_fraction), a.failures, repr(a.total_time)])
    return buf.getvalue()

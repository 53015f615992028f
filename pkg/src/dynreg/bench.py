"""Benchmark runner and the CSV report format.

Report CSV::

    # fingerprint=<config hash>
    # mode=<rmse-based|pose-based>
    pair_id,passed,rre,rte,rmse,stages,exit_stage,exit_reason,wall_time
    <one row per pair, in suite order>
    ALL,<RR>,<median RRE>,<median RTE>,<median RMSE>,<mean stages>,<fraction exiting at stage 0>,failures=<n>,<total wall time>

Floats are written with ``repr`` so a parsed report equals the emitted one.
Failed pairs have nan errors and count as RR failures. Medians skip nan.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Sequence

import numpy as np

from .config import fingerprint
from .errors import GenerationError, InputError, ParseError, RegistrationFailure, UndefinedMetricError
from .metrics import MetricConfig, passes, rmse, rre, rte
from .pipeline import PipelineConfig, register_pair
from .synthetic import SceneSpec, generate_pair

COLUMNS = ("pair_id", "passed", "rre", "rte", "rmse", "stages", "exit_stage", "exit_reason", "wall_time")
MODES = ("rmse-based", "pose-based")


@dataclass(frozen=True)
class PairRow:
    pair_id: int
    passed: bool
    rre: float
    rte: float
    rmse: float
    stages: int
    exit_stage: int
    exit_reason: str
    wall_time: float

    def same(self, other: "PairRow") -> bool:
        """Equality that treats nan as equal to nan."""
        return all(_same(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))


@dataclass(frozen=True)
class Aggregate:
    rr: float
    median_rre: float
    median_rte: float
    median_rmse: float
    mean_stages: float
    global_exit_fraction: float
    failures: int
    total_time: float


@dataclass
class BenchmarkReport:
    rows: List[PairRow]
    fingerprint: str
    mode: str = "rmse-based"
    aggregate: Aggregate = field(init=False)

    def __post_init__(self):
        self.aggregate = aggregate(self.rows)

    @property
    def rr(self) -> float:
        return self.aggregate.rr

    def __eq__(self, other):
        if not isinstance(other, BenchmarkReport):
            return NotImplemented
        return (self.fingerprint == other.fingerprint and self.mode == other.mode
                and len(self.rows) == len(other.rows)
                and all(a.same(b) for a, b in zip(self.rows, other.rows)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# fingerprint={self.fingerprint}\n# mode={self.mode}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.pair_id, int(r.passed), _f(r.rre), _f(r.rte), _f(r.rmse), r.stages, r.exit_stage,
                        r.exit_reason, _f(r.wall_time)])
        a = self.aggregate
        w.writerow(["ALL", _f(a.rr), _f(a.median_rre), _f(a.median_rte), _f(a.median_rmse), _f(a.mean_stages),
                    _f(a.global_exit_fraction), f"failures={a.failures}", _f(a.total_time)])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def _f(x: float) -> str:
    return repr(float(x))


def _median(values) -> float:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=np.float64)
    return float(np.median(v)) if v.size else math.nan


def aggregate(rows: Sequence[PairRow]) -> Aggregate:
    n = len(rows)
    if n == 0:
        return Aggregate(math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, 0, 0.0)
    return Aggregate(
        rr=sum(r.passed for r in rows) / n,
        median_rre=_median(r.rre for r in rows),
        median_rte=_median(r.rte for r in rows),
        median_rmse=_median(r.rmse for r in rows),
        mean_stages=sum(r.stages for r in rows) / n,
        global_exit_fraction=sum(r.exit_stage == 0 for r in rows) / n,
        failures=sum(r.exit_reason in ("registration-failure", "generation-failure") for r in rows),
        total_time=float(sum(r.wall_time for r in rows)),
    )


def parse_report(text: str) -> BenchmarkReport:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = list(csv.reader(body))
    if not reader or tuple(reader[0]) != COLUMNS:
        raise ParseError("report header does not match the expected columns", line=len(meta) + 1)
    rows = []
    for k, rec in enumerate(reader[1:], start=len(meta) + 2):
        if rec and rec[0] == "ALL":
            continue
        if len(rec) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, found {len(rec)}", line=k)
        try:
            rows.append(PairRow(int(rec[0]), bool(int(rec[1])), float(rec[2]), float(rec[3]), float(rec[4]),
                                int(rec[5]), int(rec[6]), rec[7], float(rec[8])))
        except ValueError as exc:
            raise ParseError(str(exc), line=k) from None
    if "fingerprint" not in meta:
        raise ParseError("report lacks a fingerprint line", line=1)
    return BenchmarkReport(rows, meta["fingerprint"], meta.get("mode", "rmse-based"))


def load_report(path) -> BenchmarkReport:
    with open(path) as fh:
        return parse_report(fh.read())


# suites as CSV: one SceneSpec per row, columns named after its fields
SUITE_COLUMNS = tuple(f.name for f in fields(SceneSpec))


def suite_to_csv(suite: Sequence[SceneSpec]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUITE_COLUMNS)
    for spec in suite:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(spec).values()])
    return buf.getvalue()


def parse_suite(text: str) -> List[SceneSpec]:
    reader = csv.DictReader(io.StringIO(text))
    unknown = set(reader.fieldnames or ()) - set(SUITE_COLUMNS)
    if unknown or not reader.fieldnames:
        raise ParseError(f"unknown suite columns {sorted(unknown)}", line=1)
    types = {f.name: type(getattr(SceneSpec(), f.name)) for f in fields(SceneSpec)}
    out = []
    for line, rec in enumerate(reader, start=2):
        try:
            out.append(SceneSpec(**{k: types[k](v) for k, v in rec.items()}))
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=line) from None
    if not out:
        raise ParseError("suite is empty", line=1)
    return out


def load_suite(path) -> List[SceneSpec]:
    with open(path) as fh:
        return parse_suite(fh.read())


def pair_config(cfg: PipelineConfig, spec: SceneSpec) -> PipelineConfig:
    """Offset the pipeline and descriptor seeds by the pair seed."""
    return replace(cfg, seed=cfg.seed + spec.seed,
                   descriptor=replace(cfg.descriptor, seed=cfg.descriptor.seed + spec.seed))


def _failed(pair_id, reason, stages, exit_stage, elapsed) -> PairRow:
    nan = math.nan
    return PairRow(pair_id, False, nan, nan, nan, stages, exit_stage, reason, elapsed)


def run_pair(pair_id: int, spec: SceneSpec, cfg: PipelineConfig, metric: MetricConfig = MetricConfig(),
             mode: str = "rmse-based", timing: bool = True) -> PairRow:
    """Generate, register and score one pair; failures become failed rows."""
    try:
        pair = generate_pair(spec)
    except GenerationError:
        return _failed(pair_id, "generation-failure", 0, -1, 0.0)
    t0 = time.perf_counter()
    clock = lambda: time.perf_counter() - t0 if timing else 0.0
    try:
        est, trace = register_pair(pair.src, pair.tgt, pair_config(cfg, spec))
    except RegistrationFailure as exc:
        stages = len(exc.trace.stages) if exc.trace is not None else 0
        return _failed(pair_id, "registration-failure", stages, 0, clock())
    elapsed = clock()
    try:
        err = rmse(*pair.gt_correspondences(), est)
    except UndefinedMetricError:
        err = math.nan
    row = {"rre": rre(est, pair.gt), "rte": rte(est, pair.gt), "rmse": err}
    # nan compares false, so an undefined RMSE fails the rmse-based criterion
    return PairRow(pair_id, bool(passes(row, metric, mode)), row["rre"], row["rte"], err, len(trace.stages), trace.exit_stage,
                   trace.exit_reason, elapsed)


def _task(args):
    return run_pair(*args)


def run_benchmark(suite: Sequence[SceneSpec], cfg: PipelineConfig, workers: int = 1,
                  metric: MetricConfig = MetricConfig(), mode: str = "rmse-based",
                  timing: bool = True) -> BenchmarkReport:
    """Run every pair of ``suite``; rows come back in suite order for any worker count.

    With ``timing`` off every wall time is recorded as 0, which makes the
    report reproducible byte for byte.
    """
    if not suite:
        raise InputError("benchmark suite is empty")
    if mode not in MODES:
        raise InputError(f"unknown recall mode {mode!r}")
    if workers < 1:
        raise InputError("workers must be >= 1")
    tasks = [(k, spec, cfg, metric, mode, timing) for k, spec in enumerate(suite)]
    if workers == 1:
        rows = [_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_task, tasks, chunksize=chunk))
    return BenchmarkReport(rows, fingerprint(cfg), mode)

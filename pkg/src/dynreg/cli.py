"""Command line: register, bench, ablate, metrics, plus suite/config dumps.

Exit codes: 0 success, 2 parse or config error, 3 registration failure.
Log verbosity comes from the DYNREG_LOG environment variable (e.g. DEBUG).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import ablation, bench, suites
from .config import format_config, load_config
from .errors import ConfigError, InputError, RegistrationFailure
from .io import FORMATS, load_cloud, read_pose, write_pose
from .metrics import rre, rte
from .pipeline import PipelineConfig, register_pair

EXIT_OK, EXIT_INPUT, EXIT_FAILURE = 0, 2, 3

TRACE_COLUMNS = ("stage", "decision", "score", "inliers", "matches", "wall_time", "note")


def _config(args) -> PipelineConfig:
    base = suites.CONFIGS[args.preset]() if args.preset else PipelineConfig()
    return load_config(args.config, base) if args.config else base


def _suite(path):
    name, _, count = path.partition(":")
    if name in suites.SUITES and not os.path.exists(path):
        return suites.SUITES[name](int(count)) if count else suites.SUITES[name]()
    return bench.load_suite(path)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_register(args) -> int:
    cfg = _config(args)
    src = load_cloud(args.src, args.format)
    tgt = load_cloud(args.tgt, args.format)
    try:
        est, trace = register_pair(src, tgt, cfg)
    except RegistrationFailure as exc:
        if args.trace and exc.trace is not None:
            _write_trace(args.trace, exc.trace)
        print(f"registration failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.trace:
        _write_trace(args.trace, trace)
    if args.out:
        write_pose(args.out, est)
    else:
        for row in est.matrix():
            print(" ".join(repr(float(v)) for v in row))
    return EXIT_OK


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for s in trace.stages:
            w.writerow([s.stage, s.decision, repr(s.score), s.inliers, s.matches, repr(s.wall_time), s.note])


def cmd_bench(args) -> int:
    report = bench.run_benchmark(_suite(args.suite), _config(args), workers=args.workers, mode=args.mode,
                                 timing=not args.no_timing)
    _write(args.out, report.to_csv())
    a = report.aggregate
    print(f"RR {a.rr:.4f} over {len(report.rows)} pairs, mean stages {a.mean_stages:.2f}", file=sys.stderr)
    return EXIT_OK


def cmd_ablate(args) -> int:
    results = ablation.run_ablation(args.which, _suite(args.suite), _config(args), workers=args.workers,
                                    mode=args.mode, timing=not args.no_timing)
    _write(args.out, ablation.summary_csv(results))
    return EXIT_OK


def cmd_metrics(args) -> int:
    est, gt = read_pose(args.est), read_pose(args.gt)
    print(f"rre_deg {rre(est, gt)!r}")
    print(f"rte {rte(est, gt)!r}")
    return EXIT_OK


def cmd_suite(args) -> int:
    _write(args.out, bench.suite_to_csv(suites.SUITES[args.name](args.count)))
    return EXIT_OK


def cmd_config(args) -> int:
    _write(args.out, format_config(_config(args)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynreg", description="Two-stage rigid point cloud registration.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value config file applied on top of the preset")
        sp.add_argument("--preset", choices=sorted(suites.CONFIGS), help="start from a built-in suite config")

    def with_bench(sp):
        sp.add_argument("--suite", required=True,
                        help="suite CSV, or a built-in name with optional count (e.g. low-overlap:50)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--mode", choices=bench.MODES, default="rmse-based")
        sp.add_argument("--no-timing", action="store_true", help="record wall times as 0 for reproducible reports")
        sp.add_argument("--out", default="-")

    r = sub.add_parser("register", help="register two clouds and print or save the pose")
    r.add_argument("src")
    r.add_argument("tgt")
    r.add_argument("--format", choices=FORMATS)
    r.add_argument("--out", help="pose file (4 rows of 4 values)")
    r.add_argument("--trace", help="per-stage trace CSV")
    with_config(r)
    r.set_defaults(func=cmd_register)

    b = sub.add_parser("bench", help="run a synthetic suite and write the report CSV")
    with_config(b)
    with_bench(b)
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("ablate", help="run one ablation study and write a summary CSV")
    a.add_argument("--which", required=True, choices=ablation.STUDIES)
    with_config(a)
    with_bench(a)
    a.set_defaults(func=cmd_ablate)

    m = sub.add_parser("metrics", help="rotation and translation error between two pose files")
    m.add_argument("--est", required=True)
    m.add_argument("--gt", required=True)
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("suite", help="write a built-in suite as CSV")
    s.add_argument("--name", required=True, choices=sorted(suites.SUITES))
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_suite)

    c = sub.add_parser("config", help="print the effective config")
    with_config(c)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    level = os.environ.get("DYNREG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RegistrationFailure as exc:
        print(f"registration failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``sdis estimate`` and ``sdis list-models``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import ConfigError, ExperimentSpec, resolve_workers, run_experiment, write_report
from .limit_states import MODELS

EXIT_CONFIG = 2
EXIT_RUN_FAILED = 3
EXIT_IO = 4


def _error(kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def _fmt(x):
    return "nan" if x != x else f"{x:.4g}"


def cmd_estimate(args):
    try:
        spec = ExperimentSpec.load(args.config)
    except ConfigError as exc:
        _error("config", str(exc), path=str(args.config))
        return EXIT_CONFIG
    out_dir = Path(args.out or spec.output or "results")
    workers = resolve_workers(args.workers)
    report = run_experiment(spec, workers=workers)
    try:
        paths = write_report(report, out_dir)
    except OSError as exc:
        _error("io", str(exc))
        return EXIT_IO
    agg = report.aggregates
    print(f"{spec.name}: {spec.model} / {spec.method}, {agg['runs']} of {spec.repetitions} runs")
    print(f"  E(Pf)      {_fmt(agg['mean_pf'])}")
    print(f"  d(Pf)      {_fmt(agg['cv_pf'])}")
    print(f"  E(d_hat)   {_fmt(agg['mean_cv_hat'])}")
    print(f"  E(N_tot)   {_fmt(agg['mean_evals'])}")
    for p in paths:
        print(f"  wrote {p}")
    if not report.complete:
        _error("run", f"{len(report.failures)} run(s) failed; partial results written",
               failed_runs=[r.run_index for r in report.failures])
        return EXIT_RUN_FAILED
    return 0


def cmd_list_models(args):
    for name, (_, description, ref) in MODELS.items():
        ref_txt = f"  (reference Pf {ref:g})" if ref else ""
        print(f"{name:18s} {description}{ref_txt}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="sdis", description="Rare-event estimation benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log level DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run an experiment config")
    est.add_argument("--config", required=True, type=Path, help="YAML experiment file")
    est.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: $SDIS_WORKERS or 1)")
    est.add_argument("--out", type=Path, default=None, help="output directory")
    est.set_defaults(func=cmd_estimate)

    lst = sub.add_parser("list-models", help="show registered benchmark models")
    lst.set_defaults(func=cmd_list_models)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

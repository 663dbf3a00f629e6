#!/usr/bin/env python3
"""
Command-line entry point for the QD Toolkit

    python cli.py run --config experiment.json [--seed S] [--workers W] [--out DIR]
    python cli.py centroids --k 1024 --d-dims 2 [--lower 0] [--upper 1] --seed 3 --out centroids.json
    python cli.py eval archive.json [--qd-offset 0]

Exit codes: 0 success, 2 configuration or validation error, 3 runtime error, 4 I/O error.
"""
import argparse
import json
import logging
import sys

import numpy as np

from config import get_config
from containers import compute_cvt_centroids
from errors import exit_code_for
from experiment_config import parse_config
from experiment_service import evaluate_archive, run_experiment
from metrics_io import save_centroids
from rng import RngStream

logger = logging.getLogger(__name__)


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def offset_value(text):
    """A number, or a JSON list for multi-objective reference points"""
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"expected a number or a JSON list, got '{text}'")
    if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise argparse.ArgumentTypeError(f"expected a number or a JSON list, got '{text}'")


def build_parser():
    parser = argparse.ArgumentParser(prog='qd', description="Quality-Diversity experiment runner")
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="Run an experiment config")
    run.add_argument('--config', required=True, help="Path to the experiment JSON")
    run.add_argument('--seed', type=int, default=None, help="Override the config seed")
    run.add_argument('--workers', type=positive_int, default=None, help="Override the scoring worker count")
    run.add_argument('--out', default=None, help="Output directory (default: QD_OUT_DIR)")

    centroids = commands.add_parser('centroids', help="Precompute CVT centroids")
    centroids.add_argument('--k', type=positive_int, required=True, help="Number of cells")
    centroids.add_argument('--d-dims', type=positive_int, required=True, help="Descriptor dimensions")
    centroids.add_argument('--lower', type=float, default=0.0, help="Lower descriptor bound on every axis")
    centroids.add_argument('--upper', type=float, default=1.0, help="Upper descriptor bound on every axis")
    centroids.add_argument('--seed', type=int, default=0)
    centroids.add_argument('--samples', type=positive_int, default=None, help="Uniform samples for Lloyd's")
    centroids.add_argument('--iters', type=int, default=None, help="Lloyd iterations")
    centroids.add_argument('--out', required=True, help="Centroid file to write")

    evaluate = commands.add_parser('eval', help="Print the metrics of a saved archive")
    evaluate.add_argument('archive_path')
    evaluate.add_argument('--qd-offset', type=offset_value, default=None,
                          help="QD offset, or the reference point as a JSON list for multi-objective archives")
    return parser


def command_run(args):
    config = parse_config(args.config)
    summary = run_experiment(config, seed=args.seed, workers=args.workers, out_dir=args.out)
    print(summary.out_dir)


def command_centroids(args):
    settings = get_config()
    bounds = (np.full(args.d_dims, args.lower), np.full(args.d_dims, args.upper))
    spec = compute_cvt_centroids(args.k, args.d_dims, bounds, args.samples or settings.CVT_SAMPLES,
                                 settings.CVT_ITERS if args.iters is None else args.iters,
                                 RngStream.from_seed(args.seed), settings.CVT_TOLERANCE)
    save_centroids(spec, args.out)
    logger.info(f"[CVT] {args.k} centroids written to {args.out}")


def command_eval(args):
    print(json.dumps(evaluate_archive(args.archive_path, args.qd_offset), sort_keys=True, separators=(',', ':')))


COMMANDS = {'run': command_run, 'centroids': command_centroids, 'eval': command_eval}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=get_config().LOG_LEVEL,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())

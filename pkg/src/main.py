#!/usr/bin/env python3
"""
Command line orchestrator for the sample consensus benchmark.

Three subcommands:
1. bench    - repeated fixed-budget runs of ransac / gasac / adaptive across
              inlier ratios, writing curve_<pct>.csv and summary.csv
2. fit      - run one engine on a CSV dataset and print the best model
3. generate - write a synthetic line or homography dataset as CSV

Usage:
    python main.py bench --task line --n 200 --ratios 0.1,0.2,0.3,0.4 --budget 400 --reps 100 --out results
    python main.py bench --config bench.conf --reps 10
    python main.py fit --data points.csv --engine adaptive --threshold 1.0
    python main.py generate --task homography --n 100 --ratio 0.3 --out data/h30.csv
"""

import argparse
import os
import sys

from dotenv import load_dotenv

from services.benchmark import (
    ADAPTIVE,
    CONFIG_KEYS,
    ENGINES,
    RANSAC,
    build_config,
    load_config,
    ratio_label,
    run_benchmark,
)
from services.consensus import Budget, run_adaptive_gasac, run_gasac, run_ransac
from services.datagen import SyntheticSpec, generate, read_dataset_csv, write_dataset_csv
from services.errors import ConfigInvalid, ConsensusError, DegenerateSample
from services.estimators import HOMOGRAPHY, LINE, TASKS, count_inliers, inlier_mask, make_estimator, refit
from services.genetics import AdaptiveParams
from utils.run_logger import log_run_error, setup_logging

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def setup_environment():
    """Load environment variables and configure logging."""
    load_dotenv()
    level = os.getenv("CONSENSUS_LOG_LEVEL", "INFO")
    setup_logging(level)
    return level


def bench_step(args) -> int:
    """Run the benchmark protocol from a config file and/or flags.

    Args:
        args: parsed arguments; any flag left unset falls back to the config
            file, then to the built-in defaults
    """
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value

    config = build_config(values)
    result = run_benchmark(config, progress=args.progress)

    print(f"\n🎉 Benchmark complete!")
    print(f"📁 Output files in {config.output_dir}:")
    for curve in result.curves:
        print(f"   curve_{ratio_label(curve.ratio)}.csv")
    if result.summary:
        print(f"   summary.csv")
        print(f"\n📊 Average final score:")
        for row in result.summary:
            print(f"   {row.engine:<10} {row.mean_final_score:10.2f}   {row.improvement_pct:+.1f}%")
    return EXIT_OK


def fit_step(args) -> int:
    """Run one engine on a CSV dataset and print the best model.

    Args:
        args: parsed arguments with data, engine, threshold, budget, seed and
            the adaptive parameters
    """
    if args.confidence is not None and not 0 < args.confidence < 1:
        raise ConfigInvalid("confidence", f"must be in (0, 1), got {args.confidence}")
    data = read_dataset_csv(args.data)
    task = HOMOGRAPHY if data.is_correspondence else LINE
    try:
        spec = make_estimator(task, args.threshold)
        params = AdaptiveParams(gamma=args.gamma, delta=args.delta,
                                population_size=args.pop, elitism=args.elitism)
        budget = Budget(args.budget)
    except ValueError as e:
        raise ConfigInvalid("fit", str(e))
    if args.engine != RANSAC and args.budget < args.pop:
        raise ConfigInvalid("budget", f"must be >= pop ({args.pop}), got {args.budget}")

    print(f"🚀 Fitting {task} with {args.engine} on {data.n} observations ({args.budget} models)...")

    if args.engine == RANSAC:
        trace = run_ransac(spec, data, budget, args.seed, confidence=args.confidence)
    elif args.engine == ADAPTIVE:
        trace = run_adaptive_gasac(spec, data, params, budget, args.seed)
    else:
        trace = run_gasac(spec, data, params.population_size, budget, args.seed)

    if trace.best_model is None:
        print("❌ Every sample was degenerate, no model found.")
        return EXIT_FAILURE

    print(f"✅ Best model: {trace.best_model.describe()}")
    print(f"   Sample: {list(trace.best_chromosome.genes)}")
    print(f"   Inliers: {trace.best_inliers} / {data.n}")
    print(f"   Models generated: {trace.models_generated}")

    try:
        refined = refit(spec, data, inlier_mask(spec, trace.best_model, data))
        print(f"✅ Refined model: {refined.describe()}")
        print(f"   Inliers: {count_inliers(spec, refined, data)} / {data.n}")
    except DegenerateSample as e:
        print(f"⚠️  Consensus set is degenerate, no refined model: {e}")
    return EXIT_OK


def generate_step(args) -> int:
    """Write one synthetic dataset to CSV."""
    try:
        spec = SyntheticSpec(task=args.task, n=args.n, inlier_ratio=args.ratio, noise_sigma=args.sigma,
                             outlier_box=args.box, seed=args.seed, inlier_threshold=args.threshold)
    except ValueError as e:
        raise ConfigInvalid("generate", str(e))

    data = generate(spec)
    write_dataset_csv(data, args.out)
    print(f"✅ Wrote {data.n} observations ({spec.inlier_count} inliers) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Robust model fitting with RANSAC, GASAC and adaptive genetic sample consensus"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # bench flags stay strings so the config layer reports field-level errors
    bench = subparsers.add_parser("bench", help="Run the fixed-budget benchmark protocol")
    bench.add_argument("--config", help="Flat key = value config file; flags override its keys")
    bench.add_argument("--task", help=f"Estimation task: {' | '.join(TASKS)} (default: line)")
    bench.add_argument("--n", help="Observations per dataset (default: 200)")
    bench.add_argument("--ratios", help="Comma-separated inlier ratios (default: 0.1,0.2,0.3,0.4)")
    bench.add_argument("--budget", help="Models generated per run (default: 400)")
    bench.add_argument("--reps", help="Repetitions per ratio (default: 100)")
    bench.add_argument("--engines", help=f"Comma-separated subset of {','.join(ENGINES)} (default: all)")
    bench.add_argument("--gamma", help="Crossover power factor (default: 3)")
    bench.add_argument("--delta", help="Mutation decay factor (default: 0.2)")
    bench.add_argument("--pop", help="Population size (default: 10)")
    bench.add_argument("--elitism", help="Chromosomes exempt from mutation (default: 1)")
    bench.add_argument("--seed", help="Base seed; repetition r uses seed + r (default: 0)")
    bench.add_argument("--out", help="Output directory (default: results)")
    bench.add_argument("--sigma", help="Inlier noise standard deviation (default: 0.5)")
    bench.add_argument("--box", help="Half-width of the outlier box (default: 100)")
    bench.add_argument("--threshold", help="Inlier threshold (default: 1.0)")
    bench.add_argument("--workers", help="Parallel repetitions (default: 1)")
    bench.add_argument("--progress", action="store_true", help="Show a progress bar")
    bench.set_defaults(func=bench_step)

    fit = subparsers.add_parser("fit", help="Fit one dataset with one engine")
    fit.add_argument("--data", required=True, help="Dataset CSV (x,y,label or x1,y1,x2,y2,label)")
    fit.add_argument("--engine", choices=ENGINES, default=ADAPTIVE, help="Engine (default: adaptive)")
    fit.add_argument("--threshold", type=float, default=1.0, help="Inlier threshold (default: 1.0)")
    fit.add_argument("--budget", type=int, default=400, help="Models generated (default: 400)")
    fit.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    fit.add_argument("--gamma", type=float, default=3.0, help="Crossover power factor (default: 3)")
    fit.add_argument("--delta", type=float, default=0.2, help="Mutation decay factor (default: 0.2)")
    fit.add_argument("--pop", type=int, default=10, help="Population size (default: 10)")
    fit.add_argument("--elitism", type=int, default=1, help="Chromosomes exempt from mutation (default: 1)")
    fit.add_argument("--confidence", type=float, default=None,
                     help="RANSAC early-stop confidence in (0, 1) (default: off, use the whole budget)")
    fit.set_defaults(func=fit_step)

    gen = subparsers.add_parser("generate", help="Write a synthetic dataset CSV")
    gen.add_argument("--task", choices=TASKS, default=LINE, help="Estimation task (default: line)")
    gen.add_argument("--n", type=int, default=100, help="Observations (default: 100)")
    gen.add_argument("--ratio", type=float, default=0.4, help="Inlier ratio (default: 0.4)")
    gen.add_argument("--sigma", type=float, default=0.5, help="Inlier noise (default: 0.5)")
    gen.add_argument("--box", type=float, default=100.0, help="Outlier box half-width (default: 100)")
    gen.add_argument("--threshold", type=float, default=1.0, help="Inlier threshold (default: 1.0)")
    gen.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    gen.add_argument("--out", required=True, help="Output CSV path")
    gen.set_defaults(func=generate_step)

    return parser


def main(argv=None) -> int:
    """Command line interface for the benchmark, fit and generate commands."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_environment()

    try:
        return args.func(args)
    except ConfigInvalid as e:
        log_run_error(e, context=f"in {args.command} configuration")
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConsensusError, FileNotFoundError, OSError) as e:
        log_run_error(e, context=f"running {args.command}", file_path=getattr(args, "data", ""))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

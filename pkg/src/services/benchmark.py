"""
Benchmark harness: repeated runs at a fixed model budget across inlier ratios.

For every inlier ratio and repetition r, one dataset is generated with seed
base_seed + r and fed to every engine with the same seed and budget. Traces
are forward-filled onto a grid of `budget` model counts and averaged over
repetitions. Outputs (written only after every run has finished):

    curve_<ratio percent>.csv    models,ransac,gasac,adaptive
    summary_<ratio percent>.csv  engine,mean_final_score,improvement_pct
    summary.csv                  same, averaged over every ratio
"""

import concurrent.futures
import csv
import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from tqdm import tqdm

from services.consensus import (
    Budget,
    RunTrace,
    run_adaptive_gasac,
    run_gasac,
    run_ransac,
)
from services.datagen import SyntheticSpec, generate
from services.errors import ConfigInvalid, MissingBaseline
from services.estimators import LINE, TASKS, Dataset, EstimatorSpec, make_estimator
from services.genetics import AdaptiveParams

logger = logging.getLogger(__name__)

RANSAC = "ransac"
GASAC = "gasac"
ADAPTIVE = "adaptive"
ENGINES = (RANSAC, GASAC, ADAPTIVE)

# config file key / CLI flag -> BenchConfig field
CONFIG_KEYS = {
    "task": "task",
    "n": "n",
    "ratios": "inlier_ratios",
    "budget": "budget",
    "reps": "repetitions",
    "engines": "engines",
    "gamma": "gamma",
    "delta": "delta",
    "pop": "population_size",
    "elitism": "elitism",
    "seed": "base_seed",
    "out": "output_dir",
    "sigma": "noise_sigma",
    "box": "outlier_box",
    "threshold": "inlier_threshold",
    "workers": "workers",
}


@dataclass(frozen=True)
class BenchConfig:
    task: str = LINE
    n: int = 200
    inlier_ratios: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    budget: int = 400
    repetitions: int = 100
    engines: Tuple[str, ...] = ENGINES
    params: AdaptiveParams = field(default_factory=AdaptiveParams)
    base_seed: int = 0
    output_dir: str = "results"
    noise_sigma: float = 0.5
    outlier_box: float = 100.0
    inlier_threshold: float = 1.0
    workers: int = 1

    def estimator(self) -> EstimatorSpec:
        return make_estimator(self.task, self.inlier_threshold)

    def synthetic_spec(self, ratio: float, repetition: int) -> SyntheticSpec:
        return SyntheticSpec(
            task=self.task,
            n=self.n,
            inlier_ratio=ratio,
            noise_sigma=self.noise_sigma,
            outlier_box=self.outlier_box,
            seed=self.base_seed + repetition,
            inlier_threshold=self.inlier_threshold,
        )


@dataclass
class AggregateCurve:
    """Mean best-inlier count after t generated models, per engine."""

    ratio: float
    budget: int
    means: Dict[str, np.ndarray]

    @property
    def engines(self) -> List[str]:
        return [e for e in ENGINES if e in self.means]

    def final_scores(self) -> Dict[str, float]:
        return {e: float(self.means[e][-1]) for e in self.engines}


@dataclass
class SummaryRow:
    engine: str
    mean_final_score: float
    improvement_pct: float


@dataclass
class BenchmarkResult:
    curves: List[AggregateCurve]
    summary: List[SummaryRow]
    per_ratio: Dict[float, List[SummaryRow]]


# -------------------------------------------------------------- config

def _parse_int(key, value) -> int:
    try:
        return int(str(value).strip())
    except ValueError:
        raise ConfigInvalid(key, f"expected an integer, got {value!r}")


def _parse_float(key, value) -> float:
    try:
        return float(str(value).strip())
    except ValueError:
        raise ConfigInvalid(key, f"expected a number, got {value!r}")


def _parse_list(value) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def load_config(config_path: str) -> Dict[str, str]:
    """Read a flat `key = value` file (`#` comments) into raw string values."""
    if not os.path.exists(config_path):
        raise ConfigInvalid("config", f"file not found: {config_path}")
    values = dotenv_values(config_path)
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigInvalid(key, f"unknown key, expected one of {sorted(CONFIG_KEYS)}")
        if value is None or value == "":
            raise ConfigInvalid(key, "missing value")
    return dict(values)


def build_config(values: Mapping[str, object]) -> BenchConfig:
    """Build a validated BenchConfig from raw key/value pairs (config keys or CLI flags).

    Raises:
        ConfigInvalid: naming the first offending key
    """
    for key in values:
        if key not in CONFIG_KEYS:
            raise ConfigInvalid(key, f"unknown key, expected one of {sorted(CONFIG_KEYS)}")

    defaults = BenchConfig()
    get = values.get

    task = str(get("task", defaults.task)).strip()
    if task not in TASKS:
        raise ConfigInvalid("task", f"expected one of {TASKS}, got {task!r}")

    n = _parse_int("n", get("n", defaults.n))
    if n < 8:
        raise ConfigInvalid("n", f"must be >= 8, got {n}")

    raw_ratios = get("ratios", defaults.inlier_ratios)
    ratios = tuple(_parse_float("ratios", r) for r in _parse_list(raw_ratios))
    if not ratios:
        raise ConfigInvalid("ratios", "at least one inlier ratio is required")
    m = make_estimator(task).minimal_sample_size
    for ratio in ratios:
        if not 0 < ratio <= 1:
            raise ConfigInvalid("ratios", f"each ratio must be in (0, 1], got {ratio}")
        if math.floor(n * ratio + 1e-9) < m:
            raise ConfigInvalid("ratios", f"ratio {ratio} leaves fewer than {m} inliers out of {n}")

    budget = _parse_int("budget", get("budget", defaults.budget))
    if budget <= 0:
        raise ConfigInvalid("budget", f"must be > 0, got {budget}")

    repetitions = _parse_int("reps", get("reps", defaults.repetitions))
    if repetitions < 1:
        raise ConfigInvalid("reps", f"must be >= 1, got {repetitions}")

    engines = tuple(_parse_list(get("engines", defaults.engines)))
    if not engines:
        raise ConfigInvalid("engines", "at least one engine is required")
    for engine in engines:
        if engine not in ENGINES:
            raise ConfigInvalid("engines", f"unknown engine {engine!r}, expected a subset of {ENGINES}")
    if len(set(engines)) != len(engines):
        raise ConfigInvalid("engines", "engines must not repeat")

    gamma = _parse_float("gamma", get("gamma", defaults.params.gamma))
    if not gamma >= 1:
        raise ConfigInvalid("gamma", f"must be >= 1, got {gamma}")
    delta = _parse_float("delta", get("delta", defaults.params.delta))
    if not 0 < delta <= 1:
        raise ConfigInvalid("delta", f"must be in (0, 1], got {delta}")
    pop = _parse_int("pop", get("pop", defaults.params.population_size))
    if pop < 4:
        raise ConfigInvalid("pop", f"must be >= 4, got {pop}")
    elitism = _parse_int("elitism", get("elitism", defaults.params.elitism))
    if not 1 <= elitism < pop:
        raise ConfigInvalid("elitism", f"must be in [1, pop), got {elitism}")
    if budget < pop:
        raise ConfigInvalid("budget", f"must be >= pop ({pop}), got {budget}")

    seed = _parse_int("seed", get("seed", defaults.base_seed))
    if seed < 0:
        raise ConfigInvalid("seed", f"must be >= 0, got {seed}")

    sigma = _parse_float("sigma", get("sigma", defaults.noise_sigma))
    if sigma < 0:
        raise ConfigInvalid("sigma", f"must be >= 0, got {sigma}")
    box = _parse_float("box", get("box", defaults.outlier_box))
    if not box > 0:
        raise ConfigInvalid("box", f"must be > 0, got {box}")
    threshold = _parse_float("threshold", get("threshold", defaults.inlier_threshold))
    if not threshold > 0:
        raise ConfigInvalid("threshold", f"must be > 0, got {threshold}")

    workers = _parse_int("workers", get("workers", defaults.workers))
    if workers < 1:
        raise ConfigInvalid("workers", f"must be >= 1, got {workers}")

    output_dir = str(get("out", defaults.output_dir)).strip()
    if not output_dir:
        raise ConfigInvalid("out", "output directory is required")

    return BenchConfig(
        task=task,
        n=n,
        inlier_ratios=ratios,
        budget=budget,
        repetitions=repetitions,
        engines=engines,
        params=AdaptiveParams(gamma=gamma, delta=delta, population_size=pop, elitism=elitism),
        base_seed=seed,
        output_dir=output_dir,
        noise_sigma=sigma,
        outlier_box=box,
        inlier_threshold=threshold,
        workers=workers,
    )


# -------------------------------------------------------------- runs

def run_engine(engine: str, spec: EstimatorSpec, data: Dataset, params: AdaptiveParams,
               max_models: int, seed: int) -> RunTrace:
    """Run one engine on one dataset with a fresh budget."""
    budget = Budget(max_models)
    if engine == RANSAC:
        return run_ransac(spec, data, budget, seed, confidence=None)
    if engine == GASAC:
        return run_gasac(spec, data, params.population_size, budget, seed)
    if engine == ADAPTIVE:
        return run_adaptive_gasac(spec, data, params, budget, seed)
    raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")


def densify(trace: RunTrace, budget: int) -> np.ndarray:
    """Best inliers after t = 1..budget models, forward-filled past the last tick."""
    grid = np.zeros(budget)
    for models_generated, best in trace.series:
        if models_generated <= budget:
            grid[models_generated - 1] = best
    return np.maximum.accumulate(grid)


def _run_repetition(config: BenchConfig, ratio: float, repetition: int) -> Dict[str, np.ndarray]:
    data = generate(config.synthetic_spec(ratio, repetition))
    spec = config.estimator()
    seed = config.base_seed + repetition
    return {
        engine: densify(run_engine(engine, spec, data, config.params, config.budget, seed), config.budget)
        for engine in config.engines
    }


def _aggregate(config: BenchConfig, ratio: float, runs: Sequence[Dict[str, np.ndarray]]) -> AggregateCurve:
    means = {engine: np.vstack([run[engine] for run in runs]).mean(axis=0) for engine in config.engines}
    return AggregateCurve(ratio=ratio, budget=config.budget, means=means)


def _improvement(score: float, baseline: float) -> float:
    if baseline == 0:
        return 0.0 if score == 0 else math.inf
    return (score - baseline) / baseline * 100.0


def summarize_final(curves: Union[AggregateCurve, Sequence[AggregateCurve]]) -> List[SummaryRow]:
    """Mean final score per engine and its improvement over RANSAC in percent.

    Raises:
        MissingBaseline: if the curves do not include RANSAC
    """
    if isinstance(curves, AggregateCurve):
        curves = [curves]
    if not curves:
        raise ValueError("no curves to summarize")
    engines = curves[0].engines
    if RANSAC not in engines:
        raise MissingBaseline("summary needs the ransac engine as baseline")

    scores = {e: float(np.mean([c.final_scores()[e] for c in curves])) for e in engines}
    baseline = scores[RANSAC]
    return [SummaryRow(e, scores[e], _improvement(scores[e], baseline)) for e in engines]


def ratio_label(ratio: float) -> str:
    return f"{ratio * 100:g}"


def run_benchmark(config: BenchConfig, progress: bool = False) -> BenchmarkResult:
    """Run every (ratio, repetition, engine) combination and write the CSV outputs."""
    curves = []
    for ratio in config.inlier_ratios:
        logger.info(
            f"🚀 {ratio_label(ratio)}% inliers: {config.repetitions} repetitions of "
            f"{', '.join(config.engines)} at {config.budget} models"
        )
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as executor:
            futures = [executor.submit(_run_repetition, config, ratio, r) for r in range(config.repetitions)]
            iterator = tqdm(futures, desc=f"{ratio_label(ratio)}% inliers", disable=not progress)
            runs = [future.result() for future in iterator]
        curve = _aggregate(config, ratio, runs)
        curves.append(curve)
        logger.info(
            "✅ Final scores: " + ", ".join(f"{e} {s:.2f}" for e, s in curve.final_scores().items())
        )

    per_ratio = {}
    summary = []
    if RANSAC in config.engines:
        per_ratio = {curve.ratio: summarize_final(curve) for curve in curves}
        summary = summarize_final(curves)
    else:
        logger.warning("⚠️  ransac not among the engines, skipping summary tables")

    result = BenchmarkResult(curves=curves, summary=summary, per_ratio=per_ratio)
    write_outputs(result, config.output_dir)
    return result


# ------------------------------------------------------------ outputs

def write_curve(curve: AggregateCurve, output_path: str) -> None:
    engines = curve.engines
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["models"] + engines)
        for t in range(curve.budget):
            writer.writerow([t + 1] + [f"{curve.means[e][t]:.6f}" for e in engines])


def write_summary(rows: Sequence[SummaryRow], output_path: str) -> None:
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["engine", "mean_final_score", "improvement_pct"])
        for row in rows:
            writer.writerow([row.engine, f"{row.mean_final_score:.6f}", f"{row.improvement_pct:.1f}"])


def write_outputs(result: BenchmarkResult, output_dir: str) -> None:
    """Write every CSV into a staging directory, then move them into output_dir.

    A failed write leaves output_dir as it was.
    """
    output_dir = os.path.abspath(output_dir)
    parent = os.path.dirname(output_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".bench-", dir=parent)
    try:
        for curve in result.curves:
            write_curve(curve, os.path.join(staging, f"curve_{ratio_label(curve.ratio)}.csv"))
        for ratio, rows in result.per_ratio.items():
            write_summary(rows, os.path.join(staging, f"summary_{ratio_label(ratio)}.csv"))
        if result.summary:
            write_summary(result.summary, os.path.join(staging, "summary.csv"))

        if not os.path.exists(output_dir):
            os.replace(staging, output_dir)
        else:
            for name in sorted(os.listdir(staging)):
                os.replace(os.path.join(staging, name), os.path.join(output_dir, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    logger.info(f"✅ Benchmark outputs written to {output_dir}")


def read_curve(input_path: str) -> Dict[str, np.ndarray]:
    """Load a curve CSV back into engine -> mean series."""
    with open(input_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        engines = [name for name in (reader.fieldnames or []) if name != "models"]
    return {e: np.array([float(r[e]) for r in rows]) for e in engines}

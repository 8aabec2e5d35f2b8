"""
Synthetic line and homography datasets with exactly controlled inlier ratios.

Inliers follow a hidden ground-truth model plus Gaussian noise. Outliers are
drawn uniformly in a square box and re-drawn until their ground-truth
residual exceeds three inlier thresholds, so the labels are never ambiguous.
"""

import csv
import itertools
import logging
import math
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from services.errors import DegenerateSample, InfeasibleSpec, InvalidDataset, TooLarge
from services.estimators import (
    HOMOGRAPHY,
    LINE,
    TASKS,
    Dataset,
    EstimatorSpec,
    Model,
    count_inliers,
    fit_line,
    make_estimator,
)
from utils.rng import make_rng

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 10_000
OUTLIER_MARGIN = 3.0
ORACLE_LIMIT = 500_000

POINT_HEADER = ["x", "y", "label"]
CORRESPONDENCE_HEADER = ["x1", "y1", "x2", "y2", "label"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic dataset.

    Args:
        task: "line" or "homography"
        n: total number of observations (>= 8)
        inlier_ratio: fraction of inliers in (0, 1]; the count is floor(n * ratio)
        noise_sigma: standard deviation of the Gaussian noise on inliers
        outlier_box: half-width of the square outliers are drawn from
        seed: generator seed
        inlier_threshold: threshold of the estimator the data is meant for
    """

    task: str
    n: int
    inlier_ratio: float
    noise_sigma: float = 0.0
    outlier_box: float = 100.0
    seed: int = 0
    inlier_threshold: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise InfeasibleSpec(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.n < 8:
            raise InfeasibleSpec(f"n must be >= 8, got {self.n}")
        if not 0 < self.inlier_ratio <= 1:
            raise InfeasibleSpec(f"inlier_ratio must be in (0, 1], got {self.inlier_ratio}")
        if self.noise_sigma < 0:
            raise InfeasibleSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.outlier_box > 0:
            raise InfeasibleSpec(f"outlier_box must be > 0, got {self.outlier_box}")
        m = self.estimator().minimal_sample_size
        if self.inlier_count < m:
            raise InfeasibleSpec(f"{self.inlier_count} inliers cannot support a {self.task} (needs {m})")

    @property
    def inlier_count(self) -> int:
        # the epsilon keeps 0.29 * 100 at 29
        return math.floor(self.n * self.inlier_ratio + 1e-9)

    def estimator(self) -> EstimatorSpec:
        return make_estimator(self.task, self.inlier_threshold)


def _line_inliers(spec: SyntheticSpec, k: int, rng: np.random.Generator) -> Tuple[Model, np.ndarray]:
    box = spec.outlier_box
    theta = rng.uniform(0.0, math.pi)
    direction = np.array([math.cos(theta), math.sin(theta)])
    anchor = rng.uniform(-box / 2, box / 2, size=2)
    truth = fit_line(np.vstack([anchor, anchor + direction]))

    t = rng.uniform(-box, box, size=k)
    points = anchor + t[:, None] * direction
    points = points + rng.normal(0.0, spec.noise_sigma, size=(k, 2))
    return truth, points


def _random_homography(box: float, rng: np.random.Generator) -> np.ndarray:
    a, b, c, d = rng.uniform(-0.2, 0.2, size=4)
    tx, ty = rng.uniform(-0.1, 0.1, size=2) * box
    # keeps w = 1 + e*x + f*y within [0.6, 1.4] over the box
    e, f = rng.uniform(-0.2, 0.2, size=2) / box
    return np.array([
        [1 + a, b, tx],
        [c, 1 + d, ty],
        [e, f, 1.0],
    ])


def _homography_inliers(spec: SyntheticSpec, k: int, rng: np.random.Generator) -> Tuple[Model, np.ndarray]:
    box = spec.outlier_box
    H = _random_homography(box, rng)
    source = rng.uniform(-box, box, size=(k, 2))
    homog = np.hstack([source, np.ones((k, 1))]) @ H.T
    target = homog[:, :2] / homog[:, 2:]
    target = target + rng.normal(0.0, spec.noise_sigma, size=(k, 2))
    return Model(HOMOGRAPHY, H.ravel()), np.hstack([source, target])


def _outliers(count: int, estimator: EstimatorSpec, truth: Model, box: float,
              rng: np.random.Generator) -> np.ndarray:
    limit = OUTLIER_MARGIN * estimator.inlier_threshold
    width = estimator.observation_width
    rows = []
    failures = 0
    while len(rows) < count:
        candidate = rng.uniform(-box, box, size=width)
        if estimator.residuals(truth, candidate[None, :])[0] > limit:
            rows.append(candidate)
            failures = 0
            continue
        failures += 1
        if failures >= MAX_REJECTIONS:
            raise InfeasibleSpec(
                f"no outlier farther than {limit} from the ground truth after {MAX_REJECTIONS} draws"
            )
    return np.asarray(rows, dtype=float).reshape(count, width)


def generate_with_model(spec: SyntheticSpec) -> Tuple[Dataset, Model]:
    """Generate a dataset and return it with its hidden ground-truth model."""
    rng = make_rng(spec.seed)
    estimator = spec.estimator()
    k = spec.inlier_count

    if spec.task == LINE:
        truth, inliers = _line_inliers(spec, k, rng)
    else:
        truth, inliers = _homography_inliers(spec, k, rng)
    outliers = _outliers(spec.n - k, estimator, truth, spec.outlier_box, rng)

    rows = np.vstack([inliers, outliers])
    labels = np.array([True] * k + [False] * (spec.n - k))
    order = rng.permutation(spec.n)
    logger.debug(f"generated {spec.task} dataset: {k} inliers, {spec.n - k} outliers, seed {spec.seed}")
    return Dataset(rows[order], labels[order]), truth


def generate(spec: SyntheticSpec) -> Dataset:
    return generate_with_model(spec)[0]


def oracle_best(spec: EstimatorSpec, data: Dataset) -> int:
    """Maximum inlier count over every minimal sample, by exhaustive enumeration.

    Raises:
        TooLarge: if C(n, m) exceeds 500,000
    """
    m = spec.minimal_sample_size
    total = math.comb(data.n, m)
    if total > ORACLE_LIMIT:
        raise TooLarge(f"C({data.n}, {m}) = {total} exceeds {ORACLE_LIMIT}")

    best = 0
    for sample in itertools.combinations(range(data.n), m):
        try:
            model = spec.fit(data.subset(sample))
        except DegenerateSample:
            continue
        best = max(best, count_inliers(spec, model, data))
    return best


def write_dataset_csv(data: Dataset, output_path: str) -> None:
    """Write a dataset as CSV (`x,y,label` or `x1,y1,x2,y2,label`)."""
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    header = CORRESPONDENCE_HEADER if data.is_correspondence else POINT_HEADER
    with open(output_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, row in enumerate(data.points):
            label = "" if data.labels is None else int(data.labels[i])
            writer.writerow([repr(float(v)) for v in row] + [label])
    logger.info(f"✅ Dataset written to {output_path}")


def _parse_label(value: str):
    value = (value or "").strip().lower()
    if value == "":
        return None
    if value in ("1", "true", "yes"):
        return True
    if value in ("0", "false", "no"):
        return False
    raise InvalidDataset(f"invalid label {value!r}")


def read_dataset_csv(input_path: str) -> Dataset:
    """Read a dataset written by write_dataset_csv (the label column may be empty)."""
    if not os.path.exists(input_path):
        raise FileNotFoundError(f"Dataset file not found: {input_path}")

    with open(input_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader, [])]
        rows = [r for r in reader if r]

    if header[:4] == CORRESPONDENCE_HEADER[:4]:
        width = 4
    elif header[:2] == POINT_HEADER[:2]:
        width = 2
    else:
        raise InvalidDataset(f"unrecognised header {header}")

    try:
        points = np.array([[float(v) for v in r[:width]] for r in rows], dtype=float).reshape(len(rows), width)
    except ValueError as e:
        raise InvalidDataset(f"invalid coordinate in {input_path}: {e}") from e

    labels = [_parse_label(r[width]) if len(r) > width else None for r in rows]
    if all(label is None for label in labels):
        return Dataset(points)
    if any(label is None for label in labels):
        raise InvalidDataset(f"{input_path} labels only some observations")
    return Dataset(points, labels)

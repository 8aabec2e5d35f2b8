"""
Minimal solvers and residuals for the sample consensus engines.

Two estimators are provided:
1. A 2D line from two points (m = 2), residual = perpendicular distance
2. A planar homography from four correspondences (m = 4), residual =
   one-directional transfer error source -> target

Observations are stored as rows of a float array: (x, y) for points and
(x1, y1, x2, y2) for correspondences.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from services.errors import DegenerateSample, InvalidDataset, ProjectionAtInfinity

COINCIDENCE_TOL = 1e-12
COLLINEARITY_TOL = 1e-9
RANK_TOL = 1e-9
W_TOL = 1e-12

LINE = "line"
HOMOGRAPHY = "homography"
TASKS = (LINE, HOMOGRAPHY)


class Point2(NamedTuple):
    x: float
    y: float


class Correspondence(NamedTuple):
    source: Point2
    target: Point2


Observation = Union[Point2, Correspondence]


def _as_rows(observations, width: Optional[int] = None) -> np.ndarray:
    """Flatten points / correspondences / arrays into a (k, width) float array."""
    arr = np.asarray(observations, dtype=float)
    if arr.size == 0:
        cols = width or (int(np.prod(arr.shape[1:])) if arr.ndim > 1 else 2)
        return arr.reshape(0, cols)
    arr = arr.reshape(arr.shape[0], -1)
    if width is not None and arr.shape[1] != width:
        raise InvalidDataset(f"expected observations of width {width}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Indexed observations with optional ground-truth inlier labels.

    Args:
        points: (n, 2) array of points or (n, 4) array of correspondences
        labels: optional length-n boolean array, True for ground-truth inliers
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        points = _as_rows(self.points).copy()
        if points.shape[1] not in (2, 4):
            raise InvalidDataset(f"observations must have 2 or 4 coordinates, got {points.shape[1]}")
        if not np.all(np.isfinite(points)):
            raise InvalidDataset("observations must have finite coordinates")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=bool).copy()
            if labels.shape != (points.shape[0],):
                raise InvalidDataset(f"expected {points.shape[0]} labels, got {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], labels=None) -> "Dataset":
        return cls(_as_rows(observations), labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @property
    def is_correspondence(self) -> bool:
        return self.width == 4

    def observation(self, index: int) -> Observation:
        row = self.points[index]
        if self.is_correspondence:
            return Correspondence(Point2(row[0], row[1]), Point2(row[2], row[3]))
        return Point2(row[0], row[1])

    def subset(self, indices) -> np.ndarray:
        return self.points[np.asarray(indices, dtype=int)]


@dataclass(frozen=True, eq=False)
class Model:
    """Fitted model parameters.

    line: (a, b, c) with unit normal (a, b) and a*x + b*y + c = 0
    homography: 9 reals, row-major 3x3
    """

    kind: str
    parameters: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.parameters, dtype=float).reshape(3, 3)

    def describe(self) -> str:
        values = ", ".join(f"{v:.6g}" for v in self.parameters)
        return f"{self.kind}({values})"


@dataclass(frozen=True)
class EstimatorSpec:
    """Minimal-solver contract shared by every engine."""

    name: str
    minimal_sample_size: int
    inlier_threshold: float
    observation_width: int
    fit: Callable[[np.ndarray], Model]
    residual: Callable[[Model, Observation], float]
    residuals: Callable[[Model, np.ndarray], np.ndarray]
    refit: Optional[Callable[[np.ndarray], Model]] = None

    def __post_init__(self):
        if self.minimal_sample_size < 2:
            raise ValueError(f"minimal_sample_size must be >= 2, got {self.minimal_sample_size}")
        if not self.inlier_threshold > 0:
            raise ValueError(f"inlier_threshold must be > 0, got {self.inlier_threshold}")

    def check_dataset(self, data: Dataset) -> None:
        if data.width != self.observation_width:
            raise InvalidDataset(
                f"{self.name} estimator expects observations of width {self.observation_width}, got {data.width}"
            )


# ---------------------------------------------------------------- line

def fit_line(sample) -> Model:
    """Fit the line through two points.

    Raises:
        DegenerateSample: if the points coincide within 1e-12
    """
    pts = _as_rows(sample, 2)
    if pts.shape[0] != 2:
        raise ValueError(f"a line needs exactly 2 points, got {pts.shape[0]}")
    (x1, y1), (x2, y2) = pts
    dx, dy = x2 - x1, y2 - y1
    length = math.hypot(dx, dy)
    if length <= COINCIDENCE_TOL:
        raise DegenerateSample("line sample points coincide")
    a, b = dy / length, -dx / length
    c = -(a * x1 + b * y1)
    return Model(LINE, np.array([a, b, c]))


def fit_line_lsq(points) -> Model:
    """Total least squares line through two or more points."""
    pts = _as_rows(points, 2)
    if pts.shape[0] < 2:
        raise DegenerateSample("a line needs at least 2 points")
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid)
    if s[0] <= COINCIDENCE_TOL:
        raise DegenerateSample("all points coincide")
    a, b = vt[-1]
    c = -(a * centroid[0] + b * centroid[1])
    return Model(LINE, np.array([a, b, c]))


def line_residual(model: Model, p) -> float:
    a, b, c = model.parameters
    x, y = p
    return abs(a * x + b * y + c)


def line_residuals(model: Model, points: np.ndarray) -> np.ndarray:
    a, b, c = model.parameters
    pts = _as_rows(points, 2)
    return np.abs(pts[:, 0] * a + pts[:, 1] * b + c)


# ---------------------------------------------------------- homography

def _normalizing_transform(pts: np.ndarray):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    shifted = pts - centroid
    mean_dist = np.mean(np.sqrt(np.sum(shifted ** 2, axis=1)))
    if mean_dist <= COINCIDENCE_TOL:
        raise DegenerateSample("all points coincide")
    scale = np.sqrt(2) / mean_dist
    T = np.array([
        [scale, 0, -scale * centroid[0]],
        [0, scale, -scale * centroid[1]],
        [0, 0, 1],
    ])
    return T, shifted * scale


def _has_collinear_triple(pts: np.ndarray) -> bool:
    for i, j, k in itertools.combinations(range(pts.shape[0]), 3):
        u = pts[j] - pts[i]
        v = pts[k] - pts[i]
        if abs(u[0] * v[1] - u[1] * v[0]) < COLLINEARITY_TOL:
            return True
    return False


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    A = np.asarray(rows)
    _, s, vt = np.linalg.svd(A)
    # 8 constraints are needed for the one-dimensional null space
    if s[7] <= RANK_TOL * s[0]:
        raise DegenerateSample("homography system is rank deficient")
    return vt[-1].reshape(3, 3)


def _normalize_scale(H: np.ndarray) -> np.ndarray:
    if abs(H[2, 2]) > W_TOL:
        return H / H[2, 2]
    return H / np.linalg.norm(H)


def fit_homography(sample) -> Model:
    """Fit a homography with the normalized direct linear transform.

    Args:
        sample: four (or more) correspondences as rows (x1, y1, x2, y2)

    Returns:
        Model with H scaled so H[2][2] == 1 (unit Frobenius norm when H[2][2] ~ 0)

    Raises:
        DegenerateSample: collinear triples in a minimal sample, or a rank
            deficient linear system
    """
    rows = _as_rows(sample, 4)
    if rows.shape[0] < 4:
        raise ValueError(f"a homography needs at least 4 correspondences, got {rows.shape[0]}")

    T_src, src = _normalizing_transform(rows[:, :2])
    T_dst, dst = _normalizing_transform(rows[:, 2:])

    if rows.shape[0] == 4 and (_has_collinear_triple(src) or _has_collinear_triple(dst)):
        raise DegenerateSample("three sample points are collinear")

    H = np.linalg.inv(T_dst) @ _dlt(src, dst) @ T_src
    H = _normalize_scale(H)
    if np.linalg.matrix_rank(H) < 3:
        raise DegenerateSample("homography is singular")
    return Model(HOMOGRAPHY, H.ravel())


def project(H: np.ndarray, point) -> np.ndarray:
    x, y = point
    p = H @ np.array([x, y, 1.0])
    if abs(p[2]) < W_TOL:
        raise ProjectionAtInfinity(f"point ({x}, {y}) projects to infinity")
    return p[:2] / p[2]


def homography_residual(model: Model, c) -> float:
    """Transfer error |target - H(source)|.

    Raises:
        ProjectionAtInfinity: if |w| < 1e-12
    """
    row = _as_rows([c], 4)[0]
    projected = project(model.matrix, row[:2])
    return math.hypot(projected[0] - row[2], projected[1] - row[3])


def homography_residuals(model: Model, rows: np.ndarray) -> np.ndarray:
    """Vectorised transfer errors; points projecting to infinity get +inf."""
    rows = _as_rows(rows, 4)
    H = model.matrix
    homog = rows[:, :2] @ H[:, :2].T + H[:, 2]
    w = homog[:, 2]
    out = np.full(rows.shape[0], np.inf)
    ok = np.abs(w) >= W_TOL
    out[ok] = np.hypot(homog[ok, 0] / w[ok] - rows[ok, 2], homog[ok, 1] / w[ok] - rows[ok, 3])
    return out


# ------------------------------------------------------------- factory

def line_estimator(inlier_threshold: float = 1.0) -> EstimatorSpec:
    return EstimatorSpec(
        name=LINE,
        minimal_sample_size=2,
        inlier_threshold=inlier_threshold,
        observation_width=2,
        fit=fit_line,
        residual=line_residual,
        residuals=line_residuals,
        refit=fit_line_lsq,
    )


def homography_estimator(inlier_threshold: float = 1.0) -> EstimatorSpec:
    return EstimatorSpec(
        name=HOMOGRAPHY,
        minimal_sample_size=4,
        inlier_threshold=inlier_threshold,
        observation_width=4,
        fit=fit_homography,
        residual=homography_residual,
        residuals=homography_residuals,
        refit=fit_homography,
    )


def make_estimator(task: str, inlier_threshold: float = 1.0) -> EstimatorSpec:
    if task == LINE:
        return line_estimator(inlier_threshold)
    if task == HOMOGRAPHY:
        return homography_estimator(inlier_threshold)
    raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")


# ----------------------------------------------------------- consensus

def residuals(spec: EstimatorSpec, model: Model, data: Dataset) -> np.ndarray:
    return spec.residuals(model, data.points)


def inlier_mask(spec: EstimatorSpec, model: Model, data: Dataset) -> np.ndarray:
    return residuals(spec, model, data) < spec.inlier_threshold


def count_inliers(spec: EstimatorSpec, model: Model, data: Dataset) -> int:
    """Number of observations with residual < inlier_threshold (the H-inliers)."""
    return int(np.count_nonzero(inlier_mask(spec, model, data)))


def refit(spec: EstimatorSpec, data: Dataset, mask) -> Model:
    """Re-estimate a model from every observation in a consensus set."""
    if spec.refit is None:
        raise ValueError(f"{spec.name} estimator has no refit")
    selected = data.points[np.asarray(mask, dtype=bool)]
    if selected.shape[0] < spec.minimal_sample_size:
        raise DegenerateSample(
            f"consensus set of {selected.shape[0]} is smaller than the minimal sample {spec.minimal_sample_size}"
        )
    return spec.refit(selected)

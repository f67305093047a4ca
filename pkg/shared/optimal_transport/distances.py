"""Exact Wasserstein-1 distances between small empirical distributions"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from config import settings
from shared.exceptions import ValidationError
from shared.utils.seeding import derive_rng
from shared.utils.validators import require_finite


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted point set; points is (count, dim), weights sum to one"""

    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] == 0:
            raise ValidationError(f"point cloud needs a non-empty (count, dim) array, got {points.shape}")
        require_finite(points, "point cloud")
        if self.weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        else:
            weights = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
            if weights.shape[0] != points.shape[0]:
                raise ValidationError(f"{weights.shape[0]} weights for {points.shape[0]} points")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
                raise ValidationError("weights must be nonnegative and sum to 1")
        points.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_images(cls, images: np.ndarray) -> "PointCloud":
        """One point per image of a (B, n, n) stack"""
        images = np.asarray(images, dtype=np.float64)
        return cls(images.reshape(images.shape[0], -1))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def _same_dim(a: PointCloud, b: PointCloud) -> None:
    if a.dim != b.dim:
        raise ValidationError(f"clouds live in different dimensions: {a.dim} vs {b.dim}")


def w1_1d(a: PointCloud, b: PointCloud) -> float:
    """Integral of |F_a - F_b| for one-dimensional clouds of any size and weighting"""
    if a.dim != 1 or b.dim != 1:
        raise ValidationError("w1_1d needs one-dimensional clouds")
    return float(wasserstein_distance(a.points[:, 0], b.points[:, 0], a.weights, b.weights))


def exact_w1(a: PointCloud, b: PointCloud) -> float:
    """Exact W1: sorted coupling in 1-D, otherwise an optimal assignment.

    The assignment formulation needs equal-size uniform clouds and refuses clouds
    above the configured point cap instead of approximating.
    """
    _same_dim(a, b)
    if a.dim == 1:
        return w1_1d(a, b)
    if a.size != b.size or not (a.uniform and b.uniform):
        raise ValidationError(
            "exact_w1 in dimension > 1 needs equal-size uniform clouds",
            details={"sizes": [a.size, b.size]},
        )
    cap = settings.numerics.max_assignment_points
    if a.size > cap:
        raise ValidationError(f"exact_w1 is limited to {cap} points, got {a.size}")
    cost = cdist(a.points, b.points)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / a.size)


def sliced_w1(a: PointCloud, b: PointCloud, n_projections: int = 200, seed: int = 0) -> float:
    """Mean 1-D W1 of the clouds projected onto random unit directions"""
    _same_dim(a, b)
    if n_projections < 1:
        raise ValidationError(f"n_projections must be >= 1, got {n_projections}")
    rng = derive_rng(seed, "sliced_w1")
    directions = rng.standard_normal((n_projections, a.dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    proj_a = a.points @ directions.T
    proj_b = b.points @ directions.T
    total = 0.0
    for k in range(n_projections):
        total += wasserstein_distance(proj_a[:, k], proj_b[:, k], a.weights, b.weights)
    return float(total / n_projections)

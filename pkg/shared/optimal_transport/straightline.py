"""Numerical check that speed-bounded paths minimizing the time-integrated
squared distance to their start point travel along the straight segment.

Knots s_0 = y, ..., s_K = x approximate s(k/K); the constraint
||s_{k+1} - s_k||_2 <= M/K discretizes ||s'||_inf <= M and the objective is the
trapezoidal rule for the integral of ||s(t) - y||² over [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from shared.exceptions import ConvergenceError, ValidationError
from shared.utils.logging import get_logger
from shared.utils.seeding import derive_rng

logger = get_logger(__name__)

FEASIBILITY_TOL = 1e-9
MAX_PASSES = 10_000


@dataclass
class PathSolution:
    knots: np.ndarray
    deviation: float
    objective: float


def segment_deviation(points: np.ndarray, y: np.ndarray, x: np.ndarray) -> float:
    """Largest Euclidean distance from any point to the segment [y, x]"""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    direction = x - y
    length_sq = float(direction @ direction)
    if length_sq == 0.0:
        return float(np.max(np.linalg.norm(points - y, axis=1)))
    t = np.clip((points - y) @ direction / length_sq, 0.0, 1.0)
    nearest = y + t[:, None] * direction
    return float(np.max(np.linalg.norm(points - nearest, axis=1)))


def trapezoid_objective(knots: np.ndarray, y: np.ndarray) -> float:
    sq = np.sum((knots - y) ** 2, axis=1)
    steps = knots.shape[0] - 1
    return float((sq.sum() - 0.5 * (sq[0] + sq[-1])) / steps)


def straight_knots(y: np.ndarray, x: np.ndarray, k: int) -> np.ndarray:
    """Constant-speed segment from y to x sampled at K+1 knots"""
    t = np.linspace(0.0, 1.0, k + 1)[:, None]
    return y + t * (x - y)


def _pull(knots: np.ndarray, k: int, anchor: int, radius: float) -> None:
    """Move knot k onto the ball of the given radius around knot `anchor` if it lies outside"""
    diff = knots[k] - knots[anchor]
    dist = float(np.sqrt(diff @ diff))
    if dist > radius:
        knots[k] = knots[anchor] + (radius / dist) * diff


def _longest_step(knots: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(np.diff(knots, axis=0), axis=1)))


def _restore_feasibility(knots: np.ndarray, radius: float, min_passes: int) -> int:
    """Alternate backward (from x) and forward (from y) reaching passes in place until
    every step meets the bound. Each move lands on the chord between a knot and its
    neighbour, so the distance of the path to the segment [y, x] never grows.

    Returns the number of passes used.
    """
    last = knots.shape[0] - 1
    for n_pass in range(1, MAX_PASSES + 1):
        for k in range(last - 1, 0, -1):
            _pull(knots, k, k + 1, radius)
        for k in range(1, last):
            _pull(knots, k, k - 1, radius)
        if n_pass >= min_passes and _longest_step(knots) <= radius + FEASIBILITY_TOL:
            return n_pass
    raise ConvergenceError(
        f"step bound not met after {MAX_PASSES} passes",
        details={"radius": radius, "longest_step": _longest_step(knots)},
    )


def straightline_check(
    y,
    x,
    speed_bound: float,
    n_knots: int = 32,
    iters: int = 2000,
    seed: int = 0,
    sweeps: int = 5,
) -> PathSolution:
    """Projected gradient on the discretized path problem from a random start.

    The random start is projected onto the feasible set; each iteration then takes a
    gradient step on the interior knots and projects back with at least `sweeps`
    reaching passes. Both maps keep the path inside any tube around [y, x] it already
    lies in, so the deviation never increases from one iteration to the next. When
    M equals the endpoint distance the feasible set is the constant-speed segment and
    the projection is exact.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if y.shape != x.shape:
        raise ValidationError(f"endpoints differ in dimension: {y.shape} vs {x.shape}")
    if n_knots < 4:
        raise ValidationError(f"need at least 4 knot intervals, got {n_knots}")
    if iters < 0:
        raise ValidationError(f"iters must be >= 0, got {iters}")
    if sweeps < 1:
        raise ValidationError(f"sweeps must be >= 1, got {sweeps}")
    distance = float(np.linalg.norm(x - y))
    if speed_bound < distance:
        raise ValidationError(
            f"speed bound {speed_bound} is below the endpoint distance {distance}: no feasible path",
            details={"speed_bound": speed_bound, "distance": distance},
        )
    radius = speed_bound / n_knots
    tight = speed_bound <= distance * (1.0 + 1e-12)

    def project(knots: np.ndarray) -> np.ndarray:
        if tight:
            return straight_knots(y, x, n_knots)
        _restore_feasibility(knots, radius, sweeps)
        return knots

    rng = derive_rng(seed, "straightline", y.size)
    knots = straight_knots(y, x, n_knots)
    knots[1:-1] += max(distance, 1.0) * rng.standard_normal((n_knots - 1, y.size))
    knots = project(knots)
    # gradient of the trapezoid objective is 2/K (s_k - y); step K/4 halves the offset
    step = 0.5
    for _ in range(iters):
        knots[1:-1] -= step * (knots[1:-1] - y)
        knots = project(knots)

    solution = PathSolution(
        knots=knots,
        deviation=segment_deviation(knots, y, x),
        objective=trapezoid_objective(knots, y),
    )
    logger.info(
        "straight-line check",
        dim=y.size,
        speed_bound=speed_bound,
        n_knots=n_knots,
        iters=iters,
        deviation=solution.deviation,
        objective=solution.objective,
    )
    return solution

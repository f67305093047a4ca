from .distances import PointCloud, exact_w1, sliced_w1, w1_1d
from .duality import dual_w1_estimate, train_critic_on_clouds
from .straightline import PathSolution, segment_deviation, straight_knots, straightline_check, trapezoid_objective

__all__ = [
    "PointCloud",
    "exact_w1",
    "sliced_w1",
    "w1_1d",
    "dual_w1_estimate",
    "train_critic_on_clouds",
    "PathSolution",
    "segment_deviation",
    "straight_knots",
    "straightline_check",
    "trapezoid_objective",
]

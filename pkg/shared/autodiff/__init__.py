from .tensor import Tensor, as_tensor, backward
from .params import BoundParams, ParamLayout, ParamVector, Segment, as_bound
from .gradcheck import GradReport, check_grad, evaluate, finite_diff_grad, grad, value_and_grad

__all__ = [
    "Tensor",
    "as_tensor",
    "backward",
    "BoundParams",
    "ParamLayout",
    "ParamVector",
    "Segment",
    "as_bound",
    "GradReport",
    "check_grad",
    "evaluate",
    "finite_diff_grad",
    "grad",
    "value_and_grad",
]

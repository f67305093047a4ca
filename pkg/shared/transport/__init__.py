from .flow import (
    TransportPath,
    euler_step,
    path_cost,
    reconstruct,
    reconstruct_batch,
    transport_batch,
    transport_path,
)
from .baseline import baseline_gradient_flow, baseline_gradient_flow_trace, tune_tikhonov
from .export import export_path

__all__ = [
    "TransportPath",
    "euler_step",
    "path_cost",
    "reconstruct",
    "reconstruct_batch",
    "transport_batch",
    "transport_path",
    "baseline_gradient_flow",
    "baseline_gradient_flow_trace",
    "tune_tikhonov",
    "export_path",
]

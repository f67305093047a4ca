"""RMSProp and the step learning-rate schedule"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from shared.autodiff.params import ParamVector
from shared.exceptions import ValidationError
from shared.models.configs import TrainConfig


@dataclass(frozen=True, eq=False)
class RMSPropState:
    """Running mean of squared gradients"""

    v: np.ndarray
    rho: float = 0.9
    eps: float = 1e-8
    steps: int = 0

    @classmethod
    def zeros(cls, size: int, rho: float = 0.9, eps: float = 1e-8) -> "RMSPropState":
        return cls(np.zeros(size), rho=rho, eps=eps)


def rmsprop_update(
    state: RMSPropState,
    params: ParamVector,
    grads: np.ndarray,
    lr: float,
) -> Tuple[RMSPropState, ParamVector]:
    """v <- rho·v + (1 - rho)·g²;  p <- p - lr·g / (sqrt(v) + eps)"""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.values.shape or state.v.shape != params.values.shape:
        raise ValidationError(
            f"optimizer shapes disagree: params {params.values.shape}, "
            f"grads {grads.shape}, state {state.v.shape}"
        )
    v = state.rho * state.v + (1.0 - state.rho) * grads * grads
    step = lr * grads / (np.sqrt(v) + state.eps)
    new_state = RMSPropState(v, rho=state.rho, eps=state.eps, steps=state.steps + 1)
    return new_state, params.with_values(params.values - step)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> Tuple[float, float]:
    """Base rates divided by decay_factor once per completed block of lr_decay_every epochs"""
    if epoch < 0:
        raise ValidationError(f"epoch must be >= 0, got {epoch}")
    scale = cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
    return cfg.lr_transport / scale, cfg.lr_critic / scale

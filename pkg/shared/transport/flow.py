"""The discrete transport path.

Forward Euler on the physics-guided flow

    I_{i+1} = I_i - (1/N) (A*(A(I_i) - y) + H_phi(I_i)),    I_0 = A*(y)

with step costs ||y - A(I_i)||_1 for i = 0..N-1. The graph-level function
works on batches and is what the training losses differentiate; the
Image-level wrappers evaluate single measurements.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config import settings
from shared.autodiff.params import ParamVector, as_bound
from shared.autodiff.tensor import Tensor, absolute
from shared.exceptions import DivergenceError, ValidationError
from shared.imaging.operators import ForwardModel, Image, Measurement, adjoint_tensor, forward_tensor
from shared.models.enums import Activation
from shared.networks.convnets import Params, hphi_tensor
from shared.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class TransportPath:
    """States I_0..I_N and the N step costs"""

    states: List[Image]
    step_costs: List[float]
    n_steps: int

    def __post_init__(self):
        if len(self.states) != self.n_steps + 1 or len(self.step_costs) != self.n_steps:
            raise ValidationError(
                f"path with {self.n_steps} steps needs {self.n_steps + 1} states and {self.n_steps} costs, "
                f"got {len(self.states)} and {len(self.step_costs)}"
            )
        if not np.all(np.isfinite(self.step_costs)):
            raise ValidationError("step costs must be finite")

    @property
    def endpoint(self) -> Image:
        return self.states[-1]


def _check_steps(n_steps: int) -> None:
    if n_steps < 1:
        raise ValidationError(f"number of steps must be >= 1, got {n_steps}")


def _range_axes(fm: ForwardModel) -> Tuple[int, ...]:
    return tuple(range(1, 1 + len(fm.range_shape)))


def _norms(states: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(states.reshape(states.shape[0], -1) ** 2, axis=1))


def drift(
    state: Tensor,
    residual: Optional[Tensor],
    fm: ForwardModel,
    hphi: Params,
    nonlinearity: Activation = Activation.TANH,
) -> Tensor:
    """A*(A(I) - y) + H_phi(I); the physics term is skipped when residual is None"""
    field = hphi_tensor(hphi, state, nonlinearity)
    if residual is None:
        return field
    return adjoint_tensor(fm, residual) + field


def transport_batch(
    y_real: np.ndarray,
    fm: ForwardModel,
    hphi: Params,
    n_steps: int,
    nonlinearity: Activation = Activation.TANH,
    physics: bool = True,
    divergence_factor: Optional[float] = None,
) -> Tuple[List[Tensor], List[Tensor]]:
    """Integrate a (B, *range_shape) batch of measurements.

    Returns the N+1 state tensors (B, n, n) and the N per-sample cost tensors (B,).
    Raises DivergenceError as soon as a state norm exceeds divergence_factor
    times the initial norm (floored at 1).
    """
    _check_steps(n_steps)
    y_real = np.asarray(y_real, dtype=np.float64)
    if y_real.shape[1:] != fm.range_shape:
        raise ValidationError(f"measurement batch has shape {y_real.shape}, expected (B, *{fm.range_shape})")
    factor = settings.numerics.divergence_factor if divergence_factor is None else divergence_factor
    bound = as_bound(hphi)
    axes = _range_axes(fm)
    y = Tensor(y_real)

    state = Tensor(fm.adjoint_real(y_real))
    limit = factor * np.maximum(_norms(state.data), 1.0)
    states, costs = [state], []
    for i in range(n_steps):
        residual = forward_tensor(fm, state) - y
        costs.append(absolute(residual).sum(axis=axes))
        update = drift(state, residual if physics else None, fm, bound, nonlinearity)
        state = state - update * (1.0 / n_steps)
        norms = _norms(state.data)
        if np.any(norms > limit):
            worst = int(np.argmax(norms / limit))
            logger.warning("transport path diverged", step=i + 1, sample=worst, norm=float(norms[worst]))
            raise DivergenceError(
                f"transport state norm {norms[worst]:.3e} exceeded {limit[worst]:.3e} at step {i + 1}",
                step=i + 1,
                details={"sample": worst},
            )
        states.append(state)
    return states, costs


def euler_step(
    state: Image,
    y: Measurement,
    fm: ForwardModel,
    hphi: ParamVector,
    n_steps: int,
    nonlinearity: Activation = Activation.TANH,
    physics: bool = True,
) -> Image:
    """One update with step 1/N"""
    _check_steps(n_steps)
    fm.check_measurement(y)
    if state.data.shape != fm.domain_shape:
        raise ValidationError(f"state shape {state.data.shape} does not match model domain {fm.domain_shape}")
    current = Tensor(state.data[None])
    residual = forward_tensor(fm, current) - y.to_real()[None] if physics else None
    nxt = current - drift(current, residual, fm, hphi, nonlinearity) * (1.0 / n_steps)
    return Image(nxt.data[0])


def transport_path(
    y: Measurement,
    fm: ForwardModel,
    hphi: ParamVector,
    n_steps: int,
    nonlinearity: Activation = Activation.TANH,
    physics: bool = True,
    divergence_factor: Optional[float] = None,
) -> TransportPath:
    fm.check_measurement(y)
    states, costs = transport_batch(
        y.to_real()[None], fm, hphi, n_steps, nonlinearity, physics, divergence_factor
    )
    return TransportPath(
        states=[Image(s.data[0]) for s in states],
        step_costs=[float(c.data[0]) for c in costs],
        n_steps=n_steps,
    )


def path_cost(path: TransportPath) -> float:
    """Mean step cost"""
    return float(np.mean(path.step_costs))


def reconstruct(
    y: Measurement,
    fm: ForwardModel,
    hphi: ParamVector,
    n_steps: int,
    nonlinearity: Activation = Activation.TANH,
    physics: bool = True,
) -> Image:
    return transport_path(y, fm, hphi, n_steps, nonlinearity, physics).endpoint


def reconstruct_batch(
    y_real: np.ndarray,
    fm: ForwardModel,
    hphi: ParamVector,
    n_steps: int,
    nonlinearity: Activation = Activation.TANH,
    physics: bool = True,
) -> np.ndarray:
    """Endpoints for a (B, *range_shape) batch as a (B, n, n) array"""
    states, _ = transport_batch(y_real, fm, hphi, n_steps, nonlinearity, physics)
    return states[-1].data.copy()

"""Classical reconstruction: gradient descent on ||A(x) - y||² + lam·R(x) with an analytic R"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from shared.autodiff.tensor import Tensor, backward
from shared.exceptions import DivergenceError, ValidationError
from shared.imaging.metrics import psnr
from shared.imaging.operators import ForwardModel, Image, Measurement, forward_tensor
from shared.models.enums import RegularizerKind
from shared.utils.logging import get_logger

logger = get_logger(__name__)

TIKHONOV_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


def regularizer_value(x: Tensor, kind: RegularizerKind, eps: float = 1e-2) -> Tensor:
    """R(x): ||x||² or the isotropic smoothed total variation sum sqrt(|grad x|² + eps²)"""
    kind = RegularizerKind(kind)
    if kind == RegularizerKind.TIKHONOV:
        return (x * x).sum()
    gx = x[1:, :-1] - x[:-1, :-1]
    gy = x[:-1, 1:] - x[:-1, :-1]
    return ((gx * gx + gy * gy + eps * eps) ** 0.5).sum()


def objective(
    x: Tensor,
    y_real: np.ndarray,
    fm: ForwardModel,
    kind: RegularizerKind,
    lam: float,
    eps: float = 1e-2,
) -> Tensor:
    residual = forward_tensor(fm, x) - y_real
    return (residual * residual).sum() + lam * regularizer_value(x, kind, eps)


def baseline_gradient_flow_trace(
    y: Measurement,
    fm: ForwardModel,
    kind: RegularizerKind,
    lam: float,
    steps: int,
    step_size: float,
    eps: float = 1e-2,
) -> Tuple[Image, List[float]]:
    """Run the descent from A*(y) and return the final image plus the objective at every iterate"""
    if lam < 0:
        raise ValidationError(f"regularization weight must be >= 0, got {lam}")
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    if not step_size > 0:
        raise ValidationError(f"step size must be > 0, got {step_size}")
    if kind == RegularizerKind.SMOOTHED_TV and not eps > 0:
        raise ValidationError(f"smoothing eps must be > 0, got {eps}")
    fm.check_measurement(y)
    y_real = y.to_real()
    x = fm.adjoint_real(y_real)
    limit = settings.numerics.divergence_factor * max(float(np.linalg.norm(x)), 1.0)
    trace: List[float] = []
    for step in range(steps + 1):
        leaf = Tensor(x, requires_grad=True)
        value = objective(leaf, y_real, fm, kind, lam, eps)
        trace.append(value.item())
        if step == steps:
            break
        backward(value)
        x = x - step_size * leaf.grad
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > limit:
            raise DivergenceError(
                f"baseline gradient flow diverged at step {step + 1} (norm {norm:.3e})",
                step=step + 1,
                details={"lam": lam, "step_size": step_size},
            )
    logger.debug("baseline flow", kind=RegularizerKind(kind).value, lam=lam, start=trace[0], end=trace[-1])
    return Image(x), trace


def baseline_gradient_flow(
    y: Measurement,
    fm: ForwardModel,
    kind: RegularizerKind,
    lam: float,
    steps: int,
    step_size: float,
    eps: float = 1e-2,
) -> Image:
    image, _ = baseline_gradient_flow_trace(y, fm, kind, lam, steps, step_size, eps)
    return image


def tune_tikhonov(
    pairs: Sequence[Tuple[Measurement, Image]],
    fm: ForwardModel,
    steps: int = 50,
    step_size: float = 0.25,
    grid: Optional[Sequence[float]] = None,
) -> Tuple[float, Dict[float, float]]:
    """Pick the Tikhonov weight with the best mean validation PSNR"""
    if not pairs:
        raise ValidationError("tune_tikhonov needs at least one validation pair")
    grid = TIKHONOV_GRID if grid is None else tuple(grid)
    scores: Dict[float, float] = {}
    for lam in grid:
        values = []
        for y, x in pairs:
            try:
                recon = baseline_gradient_flow(y, fm, RegularizerKind.TIKHONOV, lam, steps, step_size)
            except DivergenceError:
                values = [float("-inf")]
                break
            values.append(psnr(recon, x))
        scores[float(lam)] = float(np.mean(values))
    best = max(scores, key=scores.get)
    logger.info("tuned tikhonov weight", best=best, scores=scores)
    return best, scores

"""Gradients of scalar programs over a ParamVector, and the finite-difference oracle"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from shared.autodiff.params import BoundParams, ParamVector
from shared.autodiff.tensor import Tensor, as_tensor, backward
from shared.exceptions import ConvergenceError, NonFiniteError, ValidationError
from shared.utils.logging import get_logger

logger = get_logger(__name__)

# A loss maps bound parameters to a scalar tensor (plain floats are accepted for constants)
LossFn = Callable[[BoundParams], Union[Tensor, float]]
ResidualFn = Callable[[ParamVector], np.ndarray]

KINK_MARGIN = 1e-6


@dataclass
class GradReport:
    max_abs_rel_err: float
    worst_index: int
    analytic: np.ndarray
    numeric: np.ndarray
    tol: float
    reseeds: int = 0

    @property
    def passed(self) -> bool:
        return self.max_abs_rel_err <= self.tol


def _scalar(value: Union[Tensor, float]) -> Tensor:
    out = as_tensor(value)
    if out.data.size != 1:
        raise ValidationError(f"loss must be scalar, got shape {out.shape}")
    return out


def evaluate(loss: LossFn, params: ParamVector) -> float:
    return _scalar(loss(params.bind(requires_grad=False))).item()


def grad(loss: LossFn, params: ParamVector) -> np.ndarray:
    """Exact reverse-mode gradient of loss at params"""
    bound = params.bind(requires_grad=True)
    out = _scalar(loss(bound))
    backward(out)
    if bound.flat.grad is None:
        return np.zeros(len(params))
    return bound.flat.grad.copy()


def value_and_grad(loss: LossFn, params: ParamVector):
    bound = params.bind(requires_grad=True)
    out = _scalar(loss(bound))
    backward(out)
    g = np.zeros(len(params)) if bound.flat.grad is None else bound.flat.grad.copy()
    return out.item(), g


def finite_diff_grad(loss: LossFn, params: ParamVector, h: float = 1e-5) -> np.ndarray:
    """Central differences (loss(p + h e_i) - loss(p - h e_i)) / 2h"""
    if not h > 0:
        raise ValidationError(f"finite-difference step must be > 0, got {h}")
    base = params.values
    numeric = np.empty(base.size)
    for i in range(base.size):
        shifted = base.copy()
        shifted[i] = base[i] + h
        plus = _shifted_value(loss, params.with_values(shifted), i)
        shifted[i] = base[i] - h
        minus = _shifted_value(loss, params.with_values(shifted), i)
        numeric[i] = (plus - minus) / (2.0 * h)
    return numeric


def _shifted_value(loss: LossFn, params: ParamVector, index: int) -> float:
    try:
        value = evaluate(loss, params)
    except NonFiniteError as e:
        raise NonFiniteError(f"loss non-finite after shifting coordinate {index}: {e.message}", node=e.node)
    if not np.isfinite(value):
        raise NonFiniteError(f"loss non-finite after shifting coordinate {index}", node="loss")
    return value


def away_from_kinks(
    params: ParamVector,
    residuals: ResidualFn,
    reseed: Callable[[int], ParamVector],
    margin: float = KINK_MARGIN,
    attempts: int = 20,
) -> Tuple[ParamVector, int]:
    """First point, starting at params, whose absolute-value arguments all clear margin.

    residuals maps a point to every argument of an absolute value in the loss;
    coordinates that are exactly zero do not depend on the parameters (unobserved
    entries, for instance) and are skipped. reseed(attempt) draws the next candidate.
    Returns the point and the number of reseeds it took.
    """
    if not margin > 0:
        raise ValidationError(f"kink margin must be > 0, got {margin}")
    candidate = params
    for attempt in range(attempts + 1):
        r = np.abs(np.asarray(residuals(candidate), dtype=np.float64)).ravel()
        live = r[r > 0.0]
        closest = float(live.min()) if live.size else np.inf
        if closest >= margin:
            return candidate, attempt
        logger.debug("gradient check point near a kink", attempt=attempt, closest=closest, margin=margin)
        if attempt < attempts:
            candidate = reseed(attempt + 1)
    raise ConvergenceError(
        f"no point clear of kinks after {attempts} reseeds",
        details={"margin": margin, "closest": closest},
    )


def check_grad(
    loss: LossFn,
    params: ParamVector,
    tol: float = 1e-4,
    h: float = 1e-5,
    analytic: Optional[np.ndarray] = None,
    residuals: Optional[ResidualFn] = None,
    reseed: Optional[Callable[[int], ParamVector]] = None,
) -> GradReport:
    """Compare reverse-mode and central-difference gradients coordinatewise.

    The relative error of coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, 1e-8).
    A precomputed analytic gradient may be passed to audit an external source.
    With residuals and reseed the point is first moved away from the kinks of
    the loss's absolute values (see away_from_kinks).
    """
    if not tol > 0:
        raise ValidationError(f"tolerance must be > 0, got {tol}")
    reseeds = 0
    if residuals is not None:
        if reseed is None:
            raise ValidationError("residuals need a reseed function")
        if analytic is not None:
            raise ValidationError("a precomputed gradient cannot follow a reseeded point")
        params, reseeds = away_from_kinks(params, residuals, reseed)
    a = grad(loss, params) if analytic is None else np.asarray(analytic, dtype=np.float64)
    n = finite_diff_grad(loss, params, h)
    if a.shape != n.shape:
        raise ValidationError(f"analytic gradient has shape {a.shape}, expected {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    rel = np.abs(a - n) / denom
    worst = int(np.argmax(rel)) if rel.size else 0
    report = GradReport(
        max_abs_rel_err=float(rel[worst]) if rel.size else 0.0,
        worst_index=worst,
        analytic=a,
        numeric=n,
        tol=tol,
        reseeds=reseeds,
    )
    logger.debug("gradient check", max_rel_err=report.max_abs_rel_err, worst_index=worst, passed=report.passed)
    return report

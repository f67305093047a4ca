"""Lipschitz control for the critic: weight clipping, empirical audit, analytic bound"""

from typing import Sequence, Tuple

import numpy as np

from shared.autodiff.params import ParamVector
from shared.exceptions import ValidationError
from shared.imaging.operators import Image
from shared.models.enums import Activation
from shared.networks.convnets import HEAD_WEIGHT, conv_layers, critic_scores, is_critic_layout
from shared.utils.logging import get_logger

logger = get_logger(__name__)


def clip_weights(params: ParamVector, c: float) -> ParamVector:
    """Clamp every coordinate (biases included) to [-c, c]"""
    if not c > 0:
        raise ValidationError(f"clip bound must be > 0, got {c}")
    return params.with_values(np.clip(params.values, -c, c))


def estimate_lipschitz(
    params: ParamVector,
    samples: Sequence[Tuple[Image, Image]],
    nonlinearity: Activation = Activation.TANH,
) -> float:
    """max |phi(a) - phi(b)| / ||a - b||_2 over the pairs with a != b"""
    pairs = [(a, b) for a, b in samples if not np.array_equal(a.data, b.data)]
    if not pairs:
        raise ValidationError("estimate_lipschitz needs at least one pair of distinct images")
    left = np.stack([a.data for a, _ in pairs])
    right = np.stack([b.data for _, b in pairs])
    gaps = np.abs(critic_scores(params, left, nonlinearity) - critic_scores(params, right, nonlinearity))
    distances = np.sqrt(np.sum((left - right) ** 2, axis=(1, 2)))
    return float(np.max(gaps / distances))


def _conv_norm_bound(weight: np.ndarray) -> float:
    """Schur bound sqrt(max row sum · max column sum) of |K| for a zero-padded convolution"""
    magnitude = np.abs(weight)
    row_sums = magnitude.sum(axis=(1, 2, 3))
    col_sums = magnitude.sum(axis=(0, 2, 3))
    return float(np.sqrt(row_sums.max() * col_sums.max()))


def lipschitz_upper_bound(params: ParamVector, n: int) -> float:
    """Product of per-layer operator-norm bounds for the critic on n×n inputs.

    Activations are 1-Lipschitz; global average pooling contributes 1/n and the
    affine head ||w||_2.
    """
    if not is_critic_layout(params.layout):
        raise ValidationError("lipschitz_upper_bound needs a critic layout")
    bound = 1.0
    for w, _ in conv_layers(params.layout):
        bound *= _conv_norm_bound(params.segment(w))
    bound *= 1.0 / n
    bound *= float(np.linalg.norm(params.segment(HEAD_WEIGHT)))
    logger.debug("critic lipschitz bound", n=n, bound=bound)
    return bound

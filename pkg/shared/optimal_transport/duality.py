"""Kantorovich-Rubinstein dual estimates with a learned critic"""

from typing import Optional, Tuple

import numpy as np

from shared.autodiff.gradcheck import value_and_grad
from shared.autodiff.params import ParamVector
from shared.exceptions import ValidationError
from shared.imaging.operators import Image
from shared.models.configs import CriticArch
from shared.models.enums import Activation
from shared.networks.convnets import critic_scores, critic_tensor, init_params
from shared.networks.lipschitz import clip_weights, estimate_lipschitz
from shared.optimal_transport.distances import PointCloud
from shared.utils.logging import get_logger

logger = get_logger(__name__)


def cloud_images(cloud: PointCloud) -> np.ndarray:
    """Reshape d = n² points into a (count, n, n) image stack"""
    n = int(round(np.sqrt(cloud.dim)))
    if n * n != cloud.dim:
        raise ValidationError(f"cloud dimension {cloud.dim} is not a square image size")
    return cloud.points.reshape(cloud.size, n, n)


def dual_w1_estimate(
    critic_params: ParamVector,
    pushed_p: PointCloud,
    q: PointCloud,
    nonlinearity: Activation = Activation.TANH,
) -> float:
    """E_Q[phi] - E_P[phi∘T] over the weighted clouds"""
    scores_q = critic_scores(critic_params, cloud_images(q), nonlinearity)
    scores_p = critic_scores(critic_params, cloud_images(pushed_p), nonlinearity)
    return float(np.dot(q.weights, scores_q) - np.dot(pushed_p.weights, scores_p))


def cross_pairs(p: PointCloud, q: PointCloud):
    """Every (p_i, q_j) pair as Images, for auditing the critic on the coupling's support"""
    p_images, q_images = cloud_images(p), cloud_images(q)
    return [(Image(a), Image(b)) for a in p_images for b in q_images]


def train_critic_on_clouds(
    p: PointCloud,
    q: PointCloud,
    arch: Optional[CriticArch] = None,
    steps: int = 500,
    lr: float = 5e-3,
    clip_c: float = 0.05,
    seed: int = 0,
) -> Tuple[ParamVector, float, float]:
    """Ascend the dual objective on two fixed clouds with weight clipping.

    Returns the critic, its dual value and the Lipschitz estimate taken over all
    cross pairs, so value / estimate never exceeds the exact W1 of equal-size
    uniform clouds.
    """
    arch = arch or CriticArch()
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    p_images, q_images = cloud_images(p), cloud_images(q)
    params = clip_weights(init_params(arch, seed), clip_c)

    def negative_dual(bound):
        scores_q = critic_tensor(bound, q_images, arch.nonlinearity)
        scores_p = critic_tensor(bound, p_images, arch.nonlinearity)
        return (scores_p * p.weights).sum() - (scores_q * q.weights).sum()

    for _ in range(steps):
        _, g = value_and_grad(negative_dual, params)
        params = clip_weights(params.with_values(params.values - lr * g), clip_c)

    value = dual_w1_estimate(params, p, q, arch.nonlinearity)
    lipschitz = estimate_lipschitz(params, cross_pairs(p, q), arch.nonlinearity)
    logger.info("trained critic on clouds", steps=steps, dual=value, lipschitz=lipschitz)
    return params, value, lipschitz

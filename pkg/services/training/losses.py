"""Generator and critic objectives.

The critic ascends D = E_Q[phi] - E_P[phi(T(y))]; the transport descends the
same saddle, mean path cost + lam·D, plus gamma times the supervised l1 loss on
paired samples. Measurement batches are real range-layout arrays
(B, *range_shape), image batches (B, n, n).
"""

from typing import Optional, Tuple

import numpy as np

from shared.autodiff.tensor import Tensor, absolute
from shared.exceptions import ValidationError
from shared.imaging.operators import ForwardModel
from shared.models.configs import TrainConfig
from shared.networks.convnets import Params, critic_tensor
from shared.transport.flow import transport_batch

PairedBatch = Tuple[np.ndarray, np.ndarray]


def _nonempty(batch: np.ndarray, name: str) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim < 1 or batch.shape[0] == 0:
        raise ValidationError(f"{name} batch is empty")
    return batch


def _endpoint_and_cost(hphi: Params, batch_p: np.ndarray, fm: ForwardModel, cfg: TrainConfig):
    states, costs = transport_batch(
        batch_p, fm, hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics
    )
    total = costs[0]
    for c in costs[1:]:
        total = total + c
    return states[-1], (total * (1.0 / cfg.n_steps)).mean()


def dual_gap(critic: Params, endpoints, batch_q: np.ndarray, cfg: TrainConfig) -> Tensor:
    """mean phi(Q) - mean phi(endpoints)"""
    act = cfg.critic.nonlinearity
    return critic_tensor(critic, batch_q, act).mean() - critic_tensor(critic, endpoints, act).mean()


def kidot_terms(
    hphi: Params,
    critic: Params,
    batch_p: np.ndarray,
    batch_q: np.ndarray,
    fm: ForwardModel,
    cfg: TrainConfig,
) -> Tuple[Tensor, Optional[Tensor]]:
    """(mean path cost, dual gap at the endpoints); the gap is None when lam is 0"""
    batch_p = _nonempty(batch_p, "unpaired measurement")
    batch_q = _nonempty(batch_q, "clean image")
    endpoint, cost = _endpoint_and_cost(hphi, batch_p, fm, cfg)
    if cfg.lambda_ == 0:
        return cost, None
    return cost, dual_gap(critic, endpoint, batch_q, cfg)


def loss_kidot(
    hphi: Params,
    critic: Params,
    batch_p: np.ndarray,
    batch_q: np.ndarray,
    fm: ForwardModel,
    cfg: TrainConfig,
) -> Tensor:
    """Mean path cost + lam·(mean phi(Q) - mean phi(endpoint)).

    The sign of the dual gap follows the saddle formulation: the critic ascends
    mean phi(Q) - mean phi(endpoint), and the transport descends the same gap, which
    pulls its endpoints toward high critic scores. With a 1-Lipschitz critic the
    supremum of the gap over critics is the W1 distance between the endpoints and Q.
    """

    cost, gap = kidot_terms(hphi, critic, batch_p, batch_q, fm, cfg)
    return cost if gap is None else cost + cfg.lambda_ * gap


def loss_sup(hphi: Params, paired: PairedBatch, fm: ForwardModel, cfg: TrainConfig) -> Tensor:
    """Mean l1 distance between reconstructed endpoints and their ground truth"""
    y_pair = _nonempty(paired[0], "paired measurement")
    x_pair = _nonempty(paired[1], "paired image")
    if x_pair.shape[0] != y_pair.shape[0]:
        raise ValidationError(f"{y_pair.shape[0]} paired measurements for {x_pair.shape[0]} images")
    states, _ = transport_batch(y_pair, fm, hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics)
    return absolute(states[-1] - x_pair).mean()


def critic_objective(
    critic: Params,
    hphi: Params,
    batch_p: np.ndarray,
    batch_q: np.ndarray,
    fm: ForwardModel,
    cfg: TrainConfig,
) -> Tensor:
    """The quantity the critic ascends; the transport is held fixed"""
    batch_p = _nonempty(batch_p, "unpaired measurement")
    batch_q = _nonempty(batch_q, "clean image")
    states, _ = transport_batch(
        batch_p, fm, hphi, cfg.n_steps, cfg.regularizer.nonlinearity, cfg.physics
    )
    return dual_gap(critic, states[-1].data, batch_q, cfg)


def generator_terms(
    hphi: Params,
    critic: Params,
    batch_p: np.ndarray,
    batch_q: np.ndarray,
    fm: ForwardModel,
    cfg: TrainConfig,
    paired: Optional[PairedBatch] = None,
    fm_paired: Optional[ForwardModel] = None,
) -> Tuple[Tensor, Tensor, Optional[Tensor]]:
    """(objective, mean path cost, supervised loss or None) from a single pass"""
    cost, gap = kidot_terms(hphi, critic, batch_p, batch_q, fm, cfg)
    total = cost if gap is None else cost + cfg.lambda_ * gap
    if cfg.gamma == 0 or paired is None:
        return total, cost, None
    sup = loss_sup(hphi, paired, fm_paired or fm, cfg)
    return total + cfg.gamma * sup, cost, sup


def generator_objective(
    hphi: Params,
    critic: Params,
    batch_p: np.ndarray,
    batch_q: np.ndarray,
    fm: ForwardModel,
    cfg: TrainConfig,
    paired: Optional[PairedBatch] = None,
    fm_paired: Optional[ForwardModel] = None,
) -> Tensor:
    """loss_kidot + gamma·loss_sup; supervision is skipped when gamma is 0 or no pairs are given"""
    return generator_terms(hphi, critic, batch_p, batch_q, fm, cfg, paired, fm_paired)[0]

from .convnets import (
    conv_layers,
    critic_apply,
    critic_scores,
    critic_tensor,
    hphi_apply,
    hphi_tensor,
    init_params,
    layout_for,
)
from .lipschitz import clip_weights, estimate_lipschitz, lipschitz_upper_bound

__all__ = [
    "conv_layers",
    "critic_apply",
    "critic_scores",
    "critic_tensor",
    "hphi_apply",
    "hphi_tensor",
    "init_params",
    "layout_for",
    "clip_weights",
    "estimate_lipschitz",
    "lipschitz_upper_bound",
]
